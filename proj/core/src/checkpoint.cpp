#include "clld/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace clld {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

constexpr char kMagic[4] = {'C', 'L', 'L', 'D'};

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw LoadError(std::string("archive truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedArray& Archive::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw LoadError("archive has no array named " + name);
}

std::string encode_archive(const Archive& archive) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, archive.format_version);
  put<std::uint64_t>(out, archive.config_digest);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.meta.size()));
  out += archive.meta;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.arrays.size()));
  for (const auto& a : archive.arrays) {
    std::size_t n = 1;
    for (auto d : a.dims) n *= d;
    if (n != a.values.size()) throw ContractError("archive array " + a.name + " has inconsistent dims");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) put<std::uint32_t>(out, d);
    for (auto v : a.values) put<float>(out, v);
  }
  return out;
}

Archive decode_archive(std::string_view bytes, std::uint32_t expected_version) {
  Reader r(bytes);
  if (r.take(4, "magic") != std::string_view(kMagic, 4)) throw LoadError("not a CLLD archive (bad magic)");
  Archive a;
  a.format_version = r.get<std::uint32_t>("format version");
  if (a.format_version != expected_version) {
    throw LoadError("archive format version mismatch: expected " + std::to_string(expected_version) + ", found " +
                    std::to_string(a.format_version));
  }
  a.config_digest = r.get<std::uint64_t>("config digest");
  const auto meta_len = r.get<std::uint32_t>("meta length");
  a.meta = std::string(r.take(meta_len, "meta"));
  const auto count = r.get<std::uint32_t>("array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray arr;
    const auto name_len = r.get<std::uint32_t>("array name length");
    arr.name = std::string(r.take(name_len, "array name"));
    const auto ndim = r.get<std::uint32_t>("array rank");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      arr.dims.push_back(r.get<std::uint32_t>("array dims"));
      n *= arr.dims.back();
    }
    const auto raw = r.take(n * sizeof(float), "array values");
    arr.values.resize(n);
    std::memcpy(arr.values.data(), raw.data(), raw.size());
    a.arrays.push_back(std::move(arr));
  }
  if (!r.done()) throw LoadError("archive has trailing bytes");
  return a;
}

void write_archive(const Archive& archive, const std::filesystem::path& path) {
  const std::string bytes = encode_archive(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write archive " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LoadError("failed writing archive " + path.string());
}

Archive read_archive(const std::filesystem::path& path, std::uint32_t expected_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open archive " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_archive(ss.str(), expected_version);
}

template <typename T>
void store_params(Archive& archive, const std::string& prefix, const ParamSet<T>& params) {
  for (const auto& p : params) {
    NamedArray a;
    a.name = prefix + p.name;
    for (auto d : p.value.shape().dims()) a.dims.push_back(static_cast<std::uint32_t>(d));
    a.values.reserve(p.value.size());
    for (auto v : p.value.data()) a.values.push_back(static_cast<float>(v));
    archive.arrays.push_back(std::move(a));
  }
}

template <typename T>
void restore_params(const Archive& archive, const std::string& prefix, ParamSet<T>& params) {
  for (auto& p : params) {
    const NamedArray& a = archive.array(prefix + p.name);
    std::vector<std::size_t> dims(a.dims.begin(), a.dims.end());
    if (!(Shape(dims) == p.value.shape())) {
      throw LoadError("array " + a.name + " has shape " + Shape(dims).str() + ", expected " + p.value.shape().str());
    }
    auto w = p.value.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(a.values[i]);
  }
}

template void store_params(Archive&, const std::string&, const ParamSet<float>&);
template void store_params(Archive&, const std::string&, const ParamSet<double>&);
template void restore_params(const Archive&, const std::string&, ParamSet<float>&);
template void restore_params(const Archive&, const std::string&, ParamSet<double>&);

}  // namespace clld
