#ifndef MODELAB_IDX_HPP
#define MODELAB_IDX_HPP

#include <string>
#include <vector>

#include "modelab/types.hpp"

namespace modelab {

/// Raw digit corpus loaded from a big-endian IDX image/label file pair.
struct IdxData {
  std::vector<vec> images;  // pixel values scaled to [0,1]
  std::vector<int> labels;
  Index rows = 0;
  Index cols = 0;
};

/// Expects magic 0x00000803 for images and 0x00000801 for labels.
/// Errors: BadMagic, TruncatedFile, CountMismatch.
IdxData read_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace modelab

#endif
