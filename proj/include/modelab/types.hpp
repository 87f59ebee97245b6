#ifndef MODELAB_TYPES_HPP
#define MODELAB_TYPES_HPP

#include <Eigen/Core>

namespace modelab {

template <class T>
using matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using column = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using real = double;
using Index = Eigen::Index;

// Samples and embeddings are rows; parameters are (fan_in x fan_out).
using mat = matrix<real>;
using vec = column<real>;

using mat_view = Eigen::Map<mat>;
using const_mat_view = Eigen::Map<const mat>;

}  // namespace modelab

#endif
