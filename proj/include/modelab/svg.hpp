#ifndef MODELAB_SVG_HPP
#define MODELAB_SVG_HPP

#include <string>
#include <vector>

#include "modelab/types.hpp"

namespace modelab {

/** Self-contained scatter plot writer, fixed 800x800 viewBox. Output is
 * plain SVG 1.1 with no stylesheet or script, stable byte-for-byte for
 * identical inputs.
 */
class ScatterPlot {
 public:
  enum class Marker { circle, cross };

  explicit ScatterPlot(std::string title);

  /// Points are rows of an n x 2 matrix; color_class picks from a fixed
  /// palette (wraps after 10).
  void add_series(const std::string& name, const mat& points, int color_class,
                  Marker marker = Marker::circle);

  std::string render() const;
  void write(const std::string& path) const;

 private:
  struct Series {
    std::string name;
    mat points;
    int color_class;
    Marker marker;
  };

  std::string title_;
  std::vector<Series> series_;
};

}  // namespace modelab

#endif
