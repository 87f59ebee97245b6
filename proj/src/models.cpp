#include "modelab/models.hpp"

namespace modelab {

OneHotLabel OneHotLabel::at(int hot, int width) {
  OneHotLabel label;
  label.values = one_hot_embed(hot, width).value();
  return label;
}

int OneHotLabel::index() const {
  int hot = -1;
  for (Index i = 0; i < values.size(); ++i) {
    if (values[i] == 1.0) {
      if (hot >= 0) throw InvalidLabel("more than one entry equals 1");
      hot = static_cast<int>(i);
    } else if (values[i] != 0.0) {
      throw InvalidLabel("entry " + std::to_string(i) + " is " + std::to_string(values[i]) +
                         ", expected 0 or 1");
    }
  }
  if (hot < 0) throw InvalidLabel("no entry equals 1");
  return hot;
}

DecomposedEmbedding decompose(const Tensor& embedding) {
  if (embedding.rank() != 1) {
    throw ShapeMismatch("decompose expects a rank-1 embedding, got " +
                        shape_str(embedding.shape()));
  }
  if (embedding.value().norm() <= 1e-9) {
    throw NearZeroEmbedding("embedding norm " + std::to_string(embedding.value().norm()) +
                            " is too small to carry a direction");
  }
  DecomposedEmbedding out;
  out.r = euclidean_norm(embedding, 0.0);
  out.theta = div_by_scalar(embedding, out.r);
  return out;
}

BatchDecomposition decompose_rows(const Tensor& embeddings) {
  if (embeddings.rank() != 2) {
    throw ShapeMismatch("decompose_rows expects {B,d}, got " + shape_str(embeddings.shape()));
  }
  BatchDecomposition out;
  out.r = rowwise_norm(embeddings, 1e-12);
  out.theta = rowwise_div(embeddings, out.r);
  return out;
}

Tensor ConditionalGenerator::generate(const Tensor& x, const OneHotLabel& label) const {
  if (x.rank() != 1 || x.size() != sample_dim) {
    throw ShapeMismatch("generator input must be a {" + std::to_string(sample_dim) +
                        "} sample, got " + shape_str(x.shape()));
  }
  const int hot = label.index();
  if (static_cast<int>(label.values.size()) != n_categories) {
    throw InvalidLabel("label width " + std::to_string(label.values.size()) +
                       " does not match " + std::to_string(n_categories) + " categories");
  }
  return net.forward(concat(x, one_hot_embed(hot, n_categories)));
}

Tensor ConditionalGenerator::generate_rows(const Tensor& x_rows, int target_category) const {
  if (x_rows.rank() != 2 || x_rows.shape()[1] != sample_dim) {
    throw ShapeMismatch("generator batch must be {B," + std::to_string(sample_dim) +
                        "}, got " + shape_str(x_rows.shape()));
  }
  if (target_category < 0 || target_category >= n_categories) {
    throw InvalidLabel("target category " + std::to_string(target_category) + " out of range");
  }
  const Index b = x_rows.shape()[0];
  mat labels = mat::Zero(b, n_categories);
  labels.col(target_category).setOnes();
  return net.forward(concat(x_rows, Tensor::from_mat(labels)));
}

DiscriminatorPool make_pool(int n_members, const std::vector<Index>& layer_dims,
                            std::uint64_t seed, InitScheme scheme) {
  DiscriminatorPool pool;
  pool.members.reserve(n_members);
  for (int i = 0; i < n_members; ++i) {
    Mlp d = make_mlp(layer_dims, Activation::leaky_relu, Activation::sigmoid);
    // Distinct stream per member so members do not start as clones.
    init_params(d, seed + static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ull, scheme);
    pool.members.push_back(std::move(d));
  }
  return pool;
}

int select(const DiscriminatorPool& pool, const OneHotLabel& label) {
  if (static_cast<int>(label.values.size()) != pool.size()) {
    throw InvalidLabel("label width " + std::to_string(label.values.size()) +
                       " does not match pool size " + std::to_string(pool.size()));
  }
  return label.index();
}

}  // namespace modelab
