#include "modelab/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "modelab/rng.hpp"

namespace modelab {

namespace {

Tensor activate(const Tensor& h, Activation act, real slope) {
  switch (act) {
    case Activation::identity: return h;
    case Activation::relu: return relu(h);
    case Activation::leaky_relu: return leaky_relu(h, slope);
    case Activation::tanh: return tanh(h);
    case Activation::sigmoid: return sigmoid(h);
  }
  throw ConfigError("unknown activation tag");
}

}  // namespace

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t layer = 0; layer < weights.size(); ++layer) {
    h = activate(add(matmul(h, weights[layer]), biases[layer]), activations[layer], leaky_slope);
  }
  return h;
}

std::vector<Tensor> Mlp::params() const {
  std::vector<Tensor> out;
  out.reserve(2 * weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i]);
    out.push_back(biases[i]);
  }
  return out;
}

Index Mlp::param_count() const {
  Index n = 0;
  for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
    n += layer_dims[i] * layer_dims[i + 1] + layer_dims[i + 1];
  }
  return n;
}

vec Mlp::flat_params() const {
  vec flat(param_count());
  Index at = 0;
  for (const Tensor& p : params()) {
    flat.segment(at, p.size()) = p.value();
    at += p.size();
  }
  return flat;
}

void Mlp::set_flat_params(const vec& flat) {
  if (flat.size() != param_count()) {
    throw ShapeMismatch("flat parameter vector has length " + std::to_string(flat.size()) +
                        ", network expects " + std::to_string(param_count()));
  }
  Index at = 0;
  for (Tensor p : params()) {  // handles share storage; writing through a copy is fine
    p.value() = flat.segment(at, p.size());
    at += p.size();
  }
}

Mlp make_mlp(std::vector<Index> layer_dims, Activation hidden, Activation output,
             real leaky_slope) {
  if (layer_dims.size() < 2) throw ConfigError("an MLP needs at least input and output extents");
  for (Index d : layer_dims) {
    if (d <= 0) throw ConfigError("layer extents must be positive");
  }
  Mlp mlp;
  mlp.layer_dims = std::move(layer_dims);
  mlp.leaky_slope = leaky_slope;
  const std::size_t n_layers = mlp.layer_dims.size() - 1;
  for (std::size_t i = 0; i < n_layers; ++i) {
    mlp.activations.push_back(i + 1 < n_layers ? hidden : output);
    mlp.weights.push_back(Tensor::param(mat::Zero(mlp.layer_dims[i], mlp.layer_dims[i + 1])));
    mlp.biases.push_back(Tensor::param(vec::Zero(mlp.layer_dims[i + 1])));
  }
  return mlp;
}

void init_params(Mlp& mlp, std::uint64_t seed, InitScheme scheme) {
  Rng rng(seed);
  for (std::size_t layer = 0; layer < mlp.weights.size(); ++layer) {
    Tensor& w = mlp.weights[layer];
    Tensor& b = mlp.biases[layer];
    if (scheme == InitScheme::uniform_fan_in) {
      const real bound = 1.0 / std::sqrt(static_cast<real>(mlp.layer_dims[layer]));
      for (Index i = 0; i < w.size(); ++i) w.value()[i] = rng.uniform(-bound, bound);
      for (Index i = 0; i < b.size(); ++i) b.value()[i] = rng.uniform(-bound, bound);
    } else {
      for (Index i = 0; i < w.size(); ++i) w.value()[i] = rng.normal(0.0, 0.02);
      b.value().setZero();
    }
  }
}

namespace {

constexpr char kMagic[4] = {'M', 'L', 'A', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(bytes), 4);
}

void put_f64(std::ostream& os, real v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char bytes[4];
  is.read(reinterpret_cast<char*>(bytes), 4);
  if (!is) throw CheckpointFormatError("checkpoint truncated in header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

real get_f64(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  if (!is) throw CheckpointFormatError("checkpoint truncated in parameter block");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  real v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Mlp& mlp) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(mlp.layer_dims.size()));
  for (Index d : mlp.layer_dims) put_u32(os, static_cast<std::uint32_t>(d));
  const vec flat = mlp.flat_params();
  for (Index i = 0; i < flat.size(); ++i) put_f64(os, flat[i]);
  if (!os) throw IoError("write failed for " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingCheckpoint("cannot open checkpoint " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointFormatError(path + " does not start with the MLAB magic");
  }
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw CheckpointFormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t n_dims = get_u32(is);
  if (n_dims < 2 || n_dims > 64) {
    throw CheckpointFormatError("implausible layer count " + std::to_string(n_dims));
  }
  CheckpointData data;
  data.layer_dims.reserve(n_dims);
  for (std::uint32_t i = 0; i < n_dims; ++i) {
    data.layer_dims.push_back(static_cast<Index>(get_u32(is)));
  }
  Index count = 0;
  for (std::size_t i = 0; i + 1 < data.layer_dims.size(); ++i) {
    count += data.layer_dims[i] * data.layer_dims[i + 1] + data.layer_dims[i + 1];
  }
  data.params.resize(count);
  for (Index i = 0; i < count; ++i) data.params[i] = get_f64(is);
  is.peek();
  if (!is.eof()) throw CheckpointFormatError(path + " has trailing bytes");
  return data;
}

void load_checkpoint(const std::string& path, Mlp& mlp) {
  const CheckpointData data = read_checkpoint(path);
  if (data.layer_dims != mlp.layer_dims) {
    throw CheckpointFormatError(path + " holds a network of different layer extents");
  }
  mlp.set_flat_params(data.params);
}

}  // namespace modelab
