#ifndef MODELAB_MLP_HPP
#define MODELAB_MLP_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "modelab/tensor.hpp"

namespace modelab {

enum class Activation { identity, relu, leaky_relu, tanh, sigmoid };

enum class InitScheme { uniform_fan_in, normal_002 };

/** Fully-connected network; parameters are leaf tensors on no tape.
 *
 * layer_dims runs [input, hidden..., output]; activations has one entry per
 * weight layer. No normalization layers.
 */
struct Mlp {
  std::vector<Index> layer_dims;
  std::vector<Activation> activations;
  real leaky_slope = 0.2;
  std::vector<Tensor> weights;  // {d_i, d_{i+1}}
  std::vector<Tensor> biases;   // {d_{i+1}}

  /// x is a single {d0} sample or a {B,d0} batch.
  Tensor forward(const Tensor& x) const;

  std::vector<Tensor> params() const;
  Index param_count() const;
  vec flat_params() const;
  void set_flat_params(const vec& flat);
};

Mlp make_mlp(std::vector<Index> layer_dims, Activation hidden, Activation output,
             real leaky_slope = 0.2);

/// Reproducible from the seed alone. uniform_fan_in draws weights and biases
/// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); normal_002 draws weights from
/// N(0, 0.02) and zeroes the biases.
void init_params(Mlp& mlp, std::uint64_t seed, InitScheme scheme);

/// Flat binary checkpoint: "MLAB", u32 version, u32 dim count, u32 dims,
/// then 64-bit little-endian parameters in layer order. Bit-exact round trip.
void save_checkpoint(const std::string& path, const Mlp& mlp);

/// Loads into an Mlp with matching layer_dims.
void load_checkpoint(const std::string& path, Mlp& mlp);

struct CheckpointData {
  std::vector<Index> layer_dims;
  vec params;
};

CheckpointData read_checkpoint(const std::string& path);

}  // namespace modelab

#endif
