// SPDX-License-Identifier: Apache-2.0
#include "vp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>

#include "vp/errors.hpp"

namespace vp {

namespace {

constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kNativeDtype = sizeof(real) == 8 ? kDtypeF64 : kDtypeF32;

class Writer {
 public:
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    uint(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void values(std::span<const real> data) {
    for (real v : data) {
      using Bits = std::conditional_t<sizeof(real) == 8, std::uint64_t, std::uint32_t>;
      uint(std::bit_cast<Bits>(v));
    }
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<real> values(std::uint8_t dtype, std::uint64_t n) {
    if (dtype != kDtypeF64 && dtype != kDtypeF32) throw IoError("checkpoint: unknown dtype tag");
    need(n * (dtype == kDtypeF64 ? 8 : 4));
    std::vector<real> out(n);
    for (auto& v : out) {
      v = dtype == kDtypeF64 ? static_cast<real>(f64())
                             : static_cast<real>(std::bit_cast<float>(uint<std::uint32_t>()));
    }
    return out;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw IoError("checkpoint: truncated data");
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint capture_checkpoint(const PredictorModel& model, const OptimState& optim, std::uint32_t epoch,
                              std::uint64_t seed, std::string config_text) {
  Checkpoint ck;
  for (const auto& p : model.parameters()) ck.parameters.push_back({p.name, p.value.detach()});
  ck.optim = optim;
  ck.epoch = epoch;
  ck.seed = seed;
  ck.config_text = std::move(config_text);
  return ck;
}

void restore_parameters(PredictorModel& model, const Checkpoint& checkpoint) {
  auto& params = model.parameters();
  if (params.size() != checkpoint.parameters.size()) {
    throw IoError("checkpoint holds " + std::to_string(checkpoint.parameters.size()) + " parameters, model has " +
                  std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = checkpoint.parameters[i];
    if (src.name != params[i].name || src.value.shape() != params[i].value.shape()) {
      throw IoError("checkpoint parameter " + src.name + " " + shape_str(src.value.shape()) + " does not match " +
                    params[i].name + " " + shape_str(params[i].value.shape()));
    }
    std::copy(src.value.data().begin(), src.value.data().end(), params[i].value.data().begin());
  }
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  for (char c : kCheckpointMagic) w.uint(static_cast<std::uint8_t>(c));
  w.uint(kCheckpointVersion);
  w.uint(static_cast<std::uint32_t>(ck.parameters.size()));
  for (const auto& p : ck.parameters) {
    w.str(p.name);
    w.uint(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.uint(static_cast<std::uint64_t>(d));
    w.uint(kNativeDtype);
    w.uint(static_cast<std::uint64_t>(p.value.numel()));
    w.values(p.value.data());
  }
  const OptimState& o = ck.optim;
  w.uint(o.step);
  w.f64(o.lr_max);
  w.f64(o.lr_min);
  w.uint(o.total_epochs);
  w.f64(o.adam.beta1);
  w.f64(o.adam.beta2);
  w.f64(o.adam.eps);
  w.uint(static_cast<std::uint32_t>(o.moments.size()));
  for (const auto& m : o.moments) {
    w.str(m.name);
    w.uint(kNativeDtype);
    w.uint(static_cast<std::uint64_t>(m.first.size()));
    w.values(m.first);
    w.values(m.second);
  }
  w.uint(ck.epoch);
  w.uint(ck.seed);
  w.str(ck.config_text);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.uint<std::uint8_t>());
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw IoError("checkpoint: bad magic, not an NFCK file");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported format version " + std::to_string(version));

  Checkpoint ck;
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor p;
    p.name = r.str();
    Shape shape(r.uint<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(r.uint<std::uint64_t>());
    const auto dtype = r.uint<std::uint8_t>();
    const auto n = r.uint<std::uint64_t>();
    if (n != shape_numel(shape)) throw IoError("checkpoint: value count does not match shape of " + p.name);
    p.value = Tensor(std::move(shape), r.values(dtype, n));
    ck.parameters.push_back(std::move(p));
  }
  OptimState& o = ck.optim;
  o.step = r.uint<std::uint64_t>();
  o.lr_max = static_cast<real>(r.f64());
  o.lr_min = static_cast<real>(r.f64());
  o.total_epochs = r.uint<std::uint32_t>();
  o.adam.beta1 = static_cast<real>(r.f64());
  o.adam.beta2 = static_cast<real>(r.f64());
  o.adam.eps = static_cast<real>(r.f64());
  const auto moments = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < moments; ++i) {
    MomentBuffers m;
    m.name = r.str();
    const auto dtype = r.uint<std::uint8_t>();
    const auto n = r.uint<std::uint64_t>();
    m.first = r.values(dtype, n);
    m.second = r.values(dtype, n);
    o.moments.push_back(std::move(m));
  }
  ck.epoch = r.uint<std::uint32_t>();
  ck.seed = r.uint<std::uint64_t>();
  ck.config_text = r.str();
  if (!r.done()) throw IoError("checkpoint: trailing bytes after config snapshot");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace vp
