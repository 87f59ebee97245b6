#include "modelab/svg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "modelab/errors.hpp"
#include "modelab/format.hpp"

namespace modelab {

namespace {

constexpr real kView = 800.0;
constexpr real kPad = 60.0;

const char* const kPalette[10] = {"#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00",
                                  "#a65628", "#f781bf", "#17becf", "#666666", "#bcbd22"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

// Two decimal places is plenty at 800px and keeps files small.
std::string px(real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return std::string(buf);
}

}  // namespace

ScatterPlot::ScatterPlot(std::string title) : title_(std::move(title)) {}

void ScatterPlot::add_series(const std::string& name, const mat& points, int color_class,
                             Marker marker) {
  if (points.cols() != 2) {
    throw ShapeMismatch("scatter series must be n x 2, got " + std::to_string(points.cols()) +
                        " columns");
  }
  series_.push_back(Series{name, points, color_class, marker});
}

std::string ScatterPlot::render() const {
  real lo_x = -1, hi_x = 1, lo_y = -1, hi_y = 1;
  bool any = false;
  for (const Series& s : series_) {
    for (Index i = 0; i < s.points.rows(); ++i) {
      if (!any) {
        lo_x = hi_x = s.points(i, 0);
        lo_y = hi_y = s.points(i, 1);
        any = true;
      }
      lo_x = std::min(lo_x, s.points(i, 0));
      hi_x = std::max(hi_x, s.points(i, 0));
      lo_y = std::min(lo_y, s.points(i, 1));
      hi_y = std::max(hi_y, s.points(i, 1));
    }
  }
  // Equal scale on both axes so circles stay circles.
  const real span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
  const real cx = 0.5 * (lo_x + hi_x);
  const real cy = 0.5 * (lo_y + hi_y);
  const real scale = (kView - 2.0 * kPad) / span;
  auto to_px_x = [&](real x) { return kView / 2.0 + (x - cx) * scale; };
  auto to_px_y = [&](real y) { return kView / 2.0 - (y - cy) * scale; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 800\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"800\" fill=\"white\"/>\n";
  os << "<text x=\"20\" y=\"28\" font-family=\"monospace\" font-size=\"16\">"
     << xml_escape(title_) << "</text>\n";

  real legend_y = 52.0;
  for (const Series& s : series_) {
    const char* color = kPalette[((s.color_class % 10) + 10) % 10];
    os << "<text x=\"20\" y=\"" << px(legend_y) << "\" font-family=\"monospace\" font-size=\"12\""
       << " fill=\"" << color << "\">" << (s.marker == Marker::cross ? "x " : "o ")
       << xml_escape(s.name) << "</text>\n";
    legend_y += 16.0;
    for (Index i = 0; i < s.points.rows(); ++i) {
      const real x = to_px_x(s.points(i, 0));
      const real y = to_px_y(s.points(i, 1));
      if (s.marker == Marker::circle) {
        os << "<circle cx=\"" << px(x) << "\" cy=\"" << px(y)
           << "\" r=\"3\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
      } else {
        os << "<path d=\"M" << px(x - 3) << ' ' << px(y - 3) << " L" << px(x + 3) << ' '
           << px(y + 3) << " M" << px(x - 3) << ' ' << px(y + 3) << " L" << px(x + 3) << ' '
           << px(y - 3) << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
      }
    }
  }
  os << "</svg>\n";
  return os.str();
}

void ScatterPlot::write(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << render();
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace modelab
