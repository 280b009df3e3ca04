#include "snm/container.hpp"

#include <cstring>
#include <fstream>
#include <limits>

namespace snm {

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32:
      return 4;
    case Dtype::f64:
      return 8;
    case Dtype::c64:
      return 8;
    case Dtype::c128:
      return 16;
    case Dtype::u8:
      return 1;
    case Dtype::i32:
      return 4;
  }
  throw format_error("unknown dtype code");
}

namespace {

constexpr char kMagic[4] = {'S', 'N', 'M', 'T'};
constexpr std::uint8_t kVersion = 1;

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::uint8_t* p;
  std::size_t left;

  void need(std::size_t n) const {
    if (left < n) throw format_error("container truncated");
  }
  std::uint8_t u8() {
    need(1);
    std::uint8_t v = *p;
    ++p;
    --left;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
};

}  // namespace

void TensorContainer::add_raw(const std::string& name, Dtype dtype, const Shape& dims,
                              const std::uint8_t* bytes, std::size_t nbytes) {
  if (has(name)) throw parameter_error("duplicate container entry '" + name + "'");
  if (name.size() > std::numeric_limits<std::uint16_t>::max())
    throw parameter_error("container entry name too long");
  if (dims.size() > 255) throw parameter_error("container entry rank exceeds 255");
  for (auto d : dims)
    if (d < 0 || d > static_cast<std::int64_t>(std::numeric_limits<std::uint32_t>::max()))
      throw parameter_error("container dim out of u32 range");
  if (nbytes != static_cast<std::size_t>(shape_numel(dims)) * dtype_size(dtype))
    throw format_error("payload size does not match dims for '" + name + "'");
  Entry e;
  e.name = name;
  e.dtype = dtype;
  e.dims = dims;
  e.payload.assign(bytes, bytes + nbytes);
  entries_.push_back(std::move(e));
}

bool TensorContainer::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const TensorContainer::Entry& TensorContainer::entry(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw io_error("container entry '" + name + "' not found");
}

std::vector<std::string> TensorContainer::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::vector<std::uint8_t> TensorContainer::serialize() const {
  if (entries_.size() > std::numeric_limits<std::uint16_t>::max())
    throw parameter_error("too many container entries");
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u8(out, kVersion);
  put_u16(out, static_cast<std::uint16_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u8(out, static_cast<std::uint8_t>(e.dtype));
    put_u8(out, static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) put_u32(out, static_cast<std::uint32_t>(d));
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  return out;
}

TensorContainer TensorContainer::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes.data(), bytes.size()};
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw format_error("bad container magic");
  const std::uint8_t version = r.u8();
  if (version != kVersion) throw format_error("unsupported container version");
  const std::uint16_t count = r.u16();
  TensorContainer c;
  for (std::uint16_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    const std::uint8_t dtype_code = r.u8();
    if (dtype_code < 1 || dtype_code > 6) throw format_error("bad dtype code in container");
    const Dtype dtype = static_cast<Dtype>(dtype_code);
    const std::uint8_t ndim = r.u8();
    Shape dims(ndim);
    for (std::uint8_t d = 0; d < ndim; ++d) dims[d] = r.u32();
    const std::size_t nbytes = static_cast<std::size_t>(shape_numel(dims)) * dtype_size(dtype);
    std::vector<std::uint8_t> payload(nbytes);
    r.bytes(payload.data(), nbytes);
    c.add_raw(name, dtype, dims, payload.data(), nbytes);
  }
  if (r.left != 0) throw format_error("trailing bytes after last container entry");
  return c;
}

void TensorContainer::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw io_error("write failed for '" + path + "'");
}

TensorContainer TensorContainer::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw io_error("cannot open '" + path + "'");
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw io_error("read failed for '" + path + "'");
  return deserialize(bytes);
}

}  // namespace snm
