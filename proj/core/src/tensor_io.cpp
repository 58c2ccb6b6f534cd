#include "avsr/tensor_io.hpp"

#include <fstream>
#include <iterator>
#include <vector>

#include "avsr/error.hpp"

namespace avsr {
namespace {

enum class DType : std::uint32_t { kFloat32 = 0, kFloat64 = 1 };

class Writer {
 public:
  void bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const char*>(data);
    buffer_.insert(buffer_.end(), p, p + size);
  }
  template <typename T>
  void pod(T value) {
    bytes(&value, sizeof(T));
  }
  void string(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  std::vector<char>& buffer() { return buffer_; }

 private:
  std::vector<char> buffer_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buffer, std::size_t limit) : buffer_(buffer), limit_(limit) {}

  void bytes(void* out, std::size_t size) {
    if (size > limit_ - pos_) throw CorruptBlob("archive truncated");
    std::copy_n(buffer_.data() + pos_, size, static_cast<char*>(out));
    pos_ += size;
  }
  template <typename T>
  T pod() {
    T value{};
    bytes(&value, sizeof(T));
    return value;
  }
  std::string string() {
    const auto size = pod<std::uint64_t>();
    if (size > limit_ - pos_) throw CorruptBlob("archive truncated");
    std::string s(buffer_.data() + pos_, size);
    pos_ += size;
    return s;
  }
  bool done() const { return pos_ == limit_; }

 private:
  const std::vector<char>& buffer_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

DType dtype_code(const torch::Tensor& t) {
  if (t.scalar_type() == torch::kFloat32) return DType::kFloat32;
  if (t.scalar_type() == torch::kFloat64) return DType::kFloat64;
  throw InvalidInput("tensor archive: unsupported dtype " +
                     std::string(c10::toString(t.scalar_type())));
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t hash = seed;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= p[i];
    hash *= 1099511628211ull;
  }
  return hash;
}

std::uint64_t checksum(const NamedTensors& tensors) {
  std::uint64_t hash = 14695981039346656037ull;
  for (const auto& [name, tensor] : tensors) {
    hash = fnv1a64(name.data(), name.size(), hash);
    const auto t = tensor.detach().contiguous().cpu();
    hash = fnv1a64(t.data_ptr(), t.numel() * t.element_size(), hash);
  }
  return hash;
}

void write_archive(const std::filesystem::path& path, const std::string& magic,
                   std::uint32_t version, const TensorArchive& archive) {
  Writer w;
  w.bytes(magic.data(), magic.size());
  w.pod<std::uint32_t>(version);
  w.string(archive.metadata);
  w.pod<std::uint64_t>(archive.tensors.size());
  for (const auto& [name, tensor] : archive.tensors) {
    const auto t = tensor.detach().contiguous().cpu();
    w.string(name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(dtype_code(t)));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.pod<std::int64_t>(d);
    w.bytes(t.data_ptr(), t.numel() * t.element_size());
  }
  const auto sum = fnv1a64(w.buffer().data(), w.buffer().size());
  w.pod<std::uint64_t>(sum);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw Error("write failed: " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path, const std::string& magic,
                           std::uint32_t version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::vector<char> buffer((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto trailer = sizeof(std::uint64_t);
  if (buffer.size() < magic.size() + sizeof(std::uint32_t) + trailer) {
    throw CorruptBlob("archive truncated: " + path.string());
  }
  if (!std::equal(magic.begin(), magic.end(), buffer.begin())) {
    throw CorruptBlob("bad magic in " + path.string());
  }
  const auto body = buffer.size() - trailer;
  std::uint64_t stored = 0;
  std::copy_n(buffer.data() + body, trailer, reinterpret_cast<char*>(&stored));
  if (stored != fnv1a64(buffer.data(), body)) {
    throw CorruptBlob("checksum mismatch (truncated or corrupt): " + path.string());
  }

  Reader r(buffer, body);
  std::string tag(magic.size(), '\0');
  r.bytes(tag.data(), tag.size());
  const auto stored_version = r.pod<std::uint32_t>();
  if (stored_version != version) {
    throw VersionMismatch("archive version " + std::to_string(stored_version) + ", expected " +
                          std::to_string(version));
  }

  TensorArchive archive;
  archive.metadata = r.string();
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name = r.string();
    const auto code = static_cast<DType>(r.pod<std::uint32_t>());
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 8) throw CorruptBlob("implausible tensor rank for " + name);
    std::vector<std::int64_t> sizes(ndim);
    for (auto& s : sizes) {
      s = r.pod<std::int64_t>();
      if (s < 0) throw CorruptBlob("negative extent for " + name);
    }
    torch::ScalarType type;
    switch (code) {
      case DType::kFloat32: type = torch::kFloat32; break;
      case DType::kFloat64: type = torch::kFloat64; break;
      default: throw CorruptBlob("unknown dtype code for " + name);
    }
    auto t = torch::empty(sizes, torch::TensorOptions().dtype(type));
    r.bytes(t.data_ptr(), t.numel() * t.element_size());
    archive.tensors.emplace(std::move(name), std::move(t));
  }
  if (!r.done()) throw CorruptBlob("trailing bytes in " + path.string());
  return archive;
}

NamedTensors collect_named(const torch::nn::Module& module) {
  NamedTensors out;
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    out.emplace(item.key(), item.value().detach().contiguous());
  }
  for (const auto& item : module.named_buffers(/*recurse=*/true)) {
    out.emplace(item.key(), item.value().detach().contiguous());
  }
  return out;
}

void assign_named(torch::nn::Module& module, const NamedTensors& source) {
  torch::NoGradGuard no_grad;
  auto params = module.named_parameters(true);
  auto buffers = module.named_buffers(true);
  std::size_t matched = 0;
  auto copy_into = [&](torch::Tensor& dst, const std::string& name) {
    auto it = source.find(name);
    if (it == source.end()) throw ConfigMismatch("missing tensor '" + name + "'");
    if (it->second.sizes() != dst.sizes()) {
      throw ConfigMismatch("shape mismatch for '" + name + "'");
    }
    if (it->second.scalar_type() != dst.scalar_type()) {
      throw ConfigMismatch("dtype mismatch for '" + name + "'");
    }
    dst.copy_(it->second);
    ++matched;
  };
  for (auto& item : params) copy_into(item.value(), item.key());
  for (auto& item : buffers) copy_into(item.value(), item.key());
  if (matched != source.size()) {
    throw ConfigMismatch("archive holds tensors the module does not declare");
  }
}

}  // namespace avsr
