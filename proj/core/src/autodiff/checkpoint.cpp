#include "polydeform/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <type_traits>

#include "polydeform/error.hpp"
#include "polydeform/io/png_io.hpp"

namespace polydeform::autodiff {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'D', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  template <typename U>
  U get() {
    U v;
    std::memcpy(&v, take(sizeof(U)), sizeof(U));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw ValidationError("checkpoint: truncated data");
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(kVersion);
  const std::string manifest = ckpt.manifest.dump();
  w.put(static_cast<std::uint64_t>(manifest.size()));
  w.put_bytes(manifest.data(), manifest.size());
  w.put(static_cast<std::uint64_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.values.size() != shape_numel(t.shape)) {
      throw ShapeError("checkpoint: tensor " + t.name + " has " + std::to_string(t.values.size()) +
                       " values for shape " + shape_string(t.shape));
    }
    w.put(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put(static_cast<std::uint8_t>(t.dtype));
    w.put(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put(static_cast<std::uint64_t>(d));
    if (t.dtype == DType::F32) {
      for (double v : t.values) w.put(static_cast<float>(v));
    } else {
      for (double v : t.values) w.put(v);
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw ValidationError("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  const auto manifest_len = r.get<std::uint64_t>();
  const auto* mp = r.take(manifest_len);
  try {
    ckpt.manifest = nlohmann::json::parse(mp, mp + manifest_len);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: manifest is not valid JSON: ") + e.what());
  }

  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const auto name_len = r.get<std::uint32_t>();
    const auto* np = r.take(name_len);
    t.name.assign(reinterpret_cast<const char*>(np), name_len);
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw ValidationError("checkpoint: unknown dtype for " + t.name);
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw ValidationError("checkpoint: implausible rank for " + t.name);
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    const std::size_t n = shape_numel(t.shape);
    const std::size_t width = t.dtype == DType::F32 ? sizeof(float) : sizeof(double);
    if (n > bytes.size() / width) throw ValidationError("checkpoint: tensor " + t.name + " exceeds file size");
    t.values.resize(n);
    if (t.dtype == DType::F32) {
      for (auto& v : t.values) v = r.get<float>();
    } else {
      for (auto& v : t.values) v = r.get<double>();
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw ValidationError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(io::read_file(path));
}

template <typename T>
void append_parameters(Checkpoint& ckpt, const ParameterSet<T>& params, const std::string& prefix) {
  for (const auto& [name, tensor] : params.entries()) {
    CheckpointTensor t;
    t.name = prefix + name;
    t.dtype = std::is_same_v<T, float> ? DType::F32 : DType::F64;
    t.shape = tensor.shape();
    t.values.assign(tensor.data().begin(), tensor.data().end());
    ckpt.tensors.push_back(std::move(t));
  }
}

template <typename T>
void restore_parameters(const Checkpoint& ckpt, ParameterSet<T>& params, const std::string& prefix) {
  for (const auto& [name, tensor] : params.entries()) {
    const auto* t = ckpt.find(prefix + name);
    if (t == nullptr) throw CompatibilityError("checkpoint: missing tensor " + prefix + name);
    if (t->shape != tensor.shape()) {
      throw CompatibilityError("checkpoint: tensor " + prefix + name + " has shape " + shape_string(t->shape) +
                               ", expected " + shape_string(tensor.shape()));
    }
    auto dst = Tensor<T>(tensor).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(t->values[i]);
  }
}

template void append_parameters(Checkpoint&, const ParameterSet<float>&, const std::string&);
template void append_parameters(Checkpoint&, const ParameterSet<double>&, const std::string&);
template void restore_parameters(const Checkpoint&, ParameterSet<float>&, const std::string&);
template void restore_parameters(const Checkpoint&, ParameterSet<double>&, const std::string&);

}  // namespace polydeform::autodiff
