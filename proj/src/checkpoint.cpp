#include "hgr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

#include "hgr/error.hpp"

namespace hgr {

namespace {

constexpr char kMagic[8] = {'H', 'G', 'R', 'C', 'K', 'P', 'T', '1'};

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw ValidationError("checkpoint truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamStore& store) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const Parameter& p : store) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape.size()));
    for (std::size_t d : p.value.shape) put<std::uint64_t>(out, d);
    for (double x : p.value.values) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
}

void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  write_checkpoint(out, store);
  if (!out) throw Error("failed writing checkpoint: " + path);
}

void read_checkpoint(std::istream& in, ParamStore& store) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ValidationError("not a checkpoint file");
  const auto count = get<std::uint32_t>(in);
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    Shape shape(get<std::uint32_t>(in));
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
    if (!store.contains(name)) throw ValidationError("checkpoint has unknown parameter " + name);
    Parameter& p = store.get(name);
    if (p.value.shape != shape) {
      throw ValidationError("checkpoint shape " + shape_string(shape) + " for " + name + " but model expects " +
                            shape_string(p.value.shape));
    }
    for (double& x : p.value.values) x = std::bit_cast<double>(get<std::uint64_t>(in));
    seen.insert(name);
  }
  for (const Parameter& p : store) {
    if (!seen.count(p.name)) throw ValidationError("checkpoint is missing parameter " + p.name);
  }
}

void load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  read_checkpoint(in, store);
}

}  // namespace hgr
