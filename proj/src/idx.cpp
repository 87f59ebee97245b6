#include "modelab/idx.hpp"

#include <cstdint>
#include <fstream>

#include "modelab/errors.hpp"

namespace modelab {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be_u32(std::istream& is, const std::string& path) {
  unsigned char bytes[4];
  is.read(reinterpret_cast<char*>(bytes), 4);
  if (!is) throw TruncatedFile(path + " ends inside a header field");
  return (static_cast<std::uint32_t>(bytes[0]) << 24) |
         (static_cast<std::uint32_t>(bytes[1]) << 16) |
         (static_cast<std::uint32_t>(bytes[2]) << 8) | static_cast<std::uint32_t>(bytes[3]);
}

}  // namespace

IdxData read_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open " + images_path);
  if (read_be_u32(imgs, images_path) != kImageMagic) {
    throw BadMagic(images_path + " is not an IDX image file");
  }
  const std::uint32_t n_images = read_be_u32(imgs, images_path);
  const std::uint32_t rows = read_be_u32(imgs, images_path);
  const std::uint32_t cols = read_be_u32(imgs, images_path);

  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw IoError("cannot open " + labels_path);
  if (read_be_u32(lbls, labels_path) != kLabelMagic) {
    throw BadMagic(labels_path + " is not an IDX label file");
  }
  const std::uint32_t n_labels = read_be_u32(lbls, labels_path);
  if (n_images != n_labels) {
    throw CountMismatch(std::to_string(n_images) + " images vs " + std::to_string(n_labels) +
                        " labels");
  }

  IdxData data;
  data.rows = rows;
  data.cols = cols;
  data.images.reserve(n_images);
  data.labels.reserve(n_labels);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> buffer(pixels);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    imgs.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(pixels));
    if (!imgs) throw TruncatedFile(images_path + " ends inside image " + std::to_string(i));
    vec image(pixels);
    for (std::size_t p = 0; p < pixels; ++p) image[p] = buffer[p] / 255.0;
    data.images.push_back(std::move(image));

    char label;
    lbls.read(&label, 1);
    if (!lbls) throw TruncatedFile(labels_path + " ends inside label " + std::to_string(i));
    data.labels.push_back(static_cast<unsigned char>(label));
  }
  return data;
}

}  // namespace modelab
