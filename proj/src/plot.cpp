#include "stpgn/plot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stpgn/kv.hpp"

namespace stpgn::plot {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string name_of(const std::vector<std::string>& names, std::size_t i) {
  return i < names.size() ? names[i] : std::to_string(i);
}

struct Frame {
  double left = 60, top = 30, width = 400, height = 300;
  double x(double u) const { return left + u * width; }
  double y(double v) const { return top + (1.0 - v) * height; }
};

void axes(std::ostringstream& os, const Frame& f, const std::string& xlabel, const std::string& ylabel,
          double xmax, double ymax) {
  os << "<rect x=\"" << f.left << "\" y=\"" << f.top << "\" width=\"" << f.width << "\" height=\"" << f.height
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double u = i / 4.0;
    os << "<text x=\"" << fmt(f.x(u)) << "\" y=\"" << fmt(f.top + f.height + 16)
       << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt(u * xmax) << "</text>\n";
    os << "<text x=\"" << fmt(f.left - 6) << "\" y=\"" << fmt(f.y(u) + 3)
       << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(u * ymax) << "</text>\n";
  }
  os << "<text x=\"" << fmt(f.x(0.5)) << "\" y=\"" << fmt(f.top + f.height + 34)
     << "\" font-size=\"12\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  os << "<text x=\"14\" y=\"" << fmt(f.y(0.5)) << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << fmt(f.y(0.5)) << ")\">" << escape(ylabel) << "</text>\n";
}

}  // namespace

std::string confusion_svg(const metrics::Confusion& c, const std::vector<std::string>& names) {
  const std::size_t k = c.classes();
  const double cell = k ? std::max(14.0, std::min(40.0, 480.0 / static_cast<double>(k))) : 40.0;
  const double left = 120, top = 120;
  const Tensor norm = c.row_normalized();
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(left + cell * k + 20) << "\" height=\""
     << fmt(top + cell * k + 20) << "\">\n";
  os << "<text x=\"" << fmt(left) << "\" y=\"16\" font-size=\"13\">confusion (rows: truth, columns: predicted)</text>\n";
  for (std::size_t t = 0; t < k; ++t) {
    os << "<text x=\"" << fmt(left - 4) << "\" y=\"" << fmt(top + cell * (t + 0.6))
       << "\" font-size=\"10\" text-anchor=\"end\">" << escape(name_of(names, t)) << "</text>\n";
    const double cx = left + cell * (t + 0.5);
    os << "<text x=\"" << fmt(cx) << "\" y=\"" << fmt(top - 4) << "\" font-size=\"10\" transform=\"rotate(-60 "
       << fmt(cx) << ' ' << fmt(top - 4) << ")\">" << escape(name_of(names, t)) << "</text>\n";
    for (std::size_t p = 0; p < k; ++p) {
      const double v = norm(t, p);
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - v)));
      os << "<rect x=\"" << fmt(left + cell * p) << "\" y=\"" << fmt(top + cell * t) << "\" width=\"" << fmt(cell)
         << "\" height=\"" << fmt(cell) << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" stroke=\"#ccc\"/>\n";
      if (cell >= 24)
        os << "<text x=\"" << fmt(left + cell * (p + 0.5)) << "\" y=\"" << fmt(top + cell * (t + 0.6))
           << "\" font-size=\"9\" text-anchor=\"middle\">" << c.at(t, p) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string precision_curves_svg(const Tensor& scores, std::span<const int> labels,
                                 const std::vector<std::string>& names) {
  const Frame f;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"620\" height=\"380\">\n";
  axes(os, f, "recall", "precision", 1.0, 1.0);
  const std::size_t frames = scores.rows(), classes = scores.cols();
  std::size_t legend = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t positives = 0;
    for (int l : labels) positives += l == static_cast<int>(c);
    if (positives == 0) continue;
    std::vector<std::size_t> order(frames);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores(a, c) > scores(b, c); });
    const char* colour = kPalette[c % 10];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    std::size_t hits = 0;
    for (std::size_t r = 0; r < frames; ++r) {
      if (labels[order[r]] != static_cast<int>(c)) continue;
      ++hits;
      const double recall = static_cast<double>(hits) / static_cast<double>(positives);
      const double precision = static_cast<double>(hits) / static_cast<double>(r + 1);
      os << fmt(f.x(recall)) << ',' << fmt(f.y(precision)) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << fmt(f.left + f.width + 10) << "\" y=\"" << fmt(f.top + 12 + 14.0 * legend++)
       << "\" font-size=\"10\" fill=\"" << colour << "\">" << escape(name_of(names, c)) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string training_curve_svg(const std::vector<EpochRecord>& log, std::size_t fold, double lr) {
  std::vector<const EpochRecord*> rows;
  for (const auto& r : log)
    if (r.fold == fold && r.lr == lr && !r.diverged) rows.push_back(&r);
  const Frame f;
  double max_loss = 1e-12;
  std::size_t max_epoch = 1;
  for (const auto* r : rows) {
    max_loss = std::max(max_loss, r->loss);
    max_epoch = std::max(max_epoch, r->epoch);
  }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"620\" height=\"380\">\n";
  axes(os, f, "epoch", "loss (blue) / mAP % (orange, scaled)", static_cast<double>(max_epoch), max_loss);
  auto line = [&](const char* colour, auto value, double scale) {
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (const auto* r : rows)
      os << fmt(f.x(static_cast<double>(r->epoch) / static_cast<double>(max_epoch))) << ','
         << fmt(f.y(value(*r) / scale)) << ' ';
    os << "\"/>\n";
  };
  line(kPalette[0], [](const EpochRecord& r) { return r.loss; }, max_loss);
  line(kPalette[1], [](const EpochRecord& r) { return r.map; }, 100.0);
  os << "<text x=\"" << fmt(f.left) << "\" y=\"18\" font-size=\"12\">fold " << fold << ", lr " << format_double(lr)
     << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace stpgn::plot
