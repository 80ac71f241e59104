#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "midpc/harness/harness.hpp"
#include "midpc/util/format.hpp"

namespace midpc::harness {
namespace {

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                               "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

struct Panel {
  double x0, y0, w, h;
  double t_min, t_max, v_min, v_max;

  double px(double t) const { return x0 + (t - t_min) / (t_max - t_min) * w; }
  double py(double v) const { return y0 + h - (v - v_min) / (v_max - v_min) * h; }
};

std::string fmt(double v) { return format_fixed(v, 2); }

void frame(std::ostream& out, const Panel& p, const std::string& title) {
  out << "<rect x=\"" << fmt(p.x0) << "\" y=\"" << fmt(p.y0) << "\" width=\"" << fmt(p.w)
      << "\" height=\"" << fmt(p.h) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  out << "<text x=\"" << fmt(p.x0) << "\" y=\"" << fmt(p.y0 - 6) << "\" font-size=\"12\">" << title
      << "</text>\n";
  out << "<text x=\"" << fmt(p.x0 - 4) << "\" y=\"" << fmt(p.y0 + 10)
      << "\" font-size=\"10\" text-anchor=\"end\">" << format_fixed(p.v_max, 2) << "</text>\n";
  out << "<text x=\"" << fmt(p.x0 - 4) << "\" y=\"" << fmt(p.y0 + p.h)
      << "\" font-size=\"10\" text-anchor=\"end\">" << format_fixed(p.v_min, 2) << "</text>\n";
}

void hline(std::ostream& out, const Panel& p, double v) {
  out << "<line x1=\"" << fmt(p.x0) << "\" y1=\"" << fmt(p.py(v)) << "\" x2=\"" << fmt(p.x0 + p.w)
      << "\" y2=\"" << fmt(p.py(v)) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
}

template <class At>
void polyline(std::ostream& out, const Panel& p, Eigen::Index n, At at, const char* color,
              bool steps) {
  if (n == 0) return;
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto [t, v] = at(k);
    if (steps && k > 0) out << fmt(p.px(t)) << ',' << fmt(p.py(at(k - 1).second)) << ' ';
    out << fmt(p.px(t)) << ',' << fmt(p.py(v)) << ' ';
  }
  out << "\"/>\n";
}

std::pair<double, double> range(const Eigen::MatrixXd& m, double lo, double hi) {
  if (m.size() > 0) {
    lo = std::min(lo, m.minCoeff());
    hi = std::max(hi, m.maxCoeff());
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

void write_trace_svg(std::ostream& out, const ClosedLoopRun& run, const plant::ConstraintSpec& c) {
  const double width = 720, panel_h = 150, gap = 40, left = 60;
  const Eigen::Index n = static_cast<Eigen::Index>(run.steps());
  const double t_max = std::max<double>(1.0, static_cast<double>(n));
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << 4 * (panel_h + gap) + gap << "\">\n";

  double y = gap;
  auto make = [&](const std::pair<double, double>& r) {
    Panel p{left, y, width - left - 20, panel_h, 0.0, t_max, r.first, r.second};
    y += panel_h + gap;
    return p;
  };

  {
    const Panel p = make(range(run.x, c.x_min.minCoeff(), c.x_max.maxCoeff()));
    frame(out, p, "states");
    for (Eigen::Index i = 0; i < c.x_max.size(); ++i) {
      hline(out, p, c.x_max(i));
      hline(out, p, c.x_min(i));
    }
    for (Eigen::Index i = 0; i < run.x.cols(); ++i)
      polyline(out, p, run.x.rows(), [&](Eigen::Index k) { return std::pair{double(k), run.x(k, i)}; },
               kColors[i % 8], false);
  }
  {
    const Panel p = make(range(run.u, c.u_min.minCoeff(), c.u_sum_max));
    frame(out, p, "continuous inputs");
    hline(out, p, c.u_sum_max);
    for (Eigen::Index i = 0; i < run.u.cols(); ++i)
      polyline(out, p, n, [&](Eigen::Index k) { return std::pair{double(k), run.u(k, i)}; },
               kColors[i % 8], true);
  }
  {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& set : c.feasible_integers) {
      lo = std::min(lo, double(set.front()));
      hi = std::max(hi, double(set.back()));
    }
    const Panel p = make(range(run.delta, lo, hi));
    frame(out, p, "integer inputs");
    for (Eigen::Index i = 0; i < run.delta.cols(); ++i)
      polyline(out, p, n, [&](Eigen::Index k) { return std::pair{double(k), run.delta(k, i)}; },
               kColors[(i + 2) % 8], true);
  }
  {
    const Eigen::MatrixXd d = run.d.topRows(n);
    const Panel p = make(range(d, 0.0, 0.0));
    frame(out, p, "disturbances");
    for (Eigen::Index i = 0; i < d.cols(); ++i)
      polyline(out, p, n, [&](Eigen::Index k) { return std::pair{double(k), d(k, i)}; },
               kColors[(i + 4) % 8], true);
  }
  out << "</svg>\n";
}

void write_phase_svg(std::ostream& out, const std::vector<ClosedLoopRun>& runs,
                     const plant::ConstraintSpec& c) {
  const double size = 480, margin = 50;
  double x_lo = c.x_min(0), x_hi = c.x_max(0), y_lo = c.x_min(1), y_hi = c.x_max(1);
  for (const auto& r : runs) {
    x_lo = std::min(x_lo, r.x.col(0).minCoeff());
    x_hi = std::max(x_hi, r.x.col(0).maxCoeff());
    y_lo = std::min(y_lo, r.x.col(1).minCoeff());
    y_hi = std::max(y_hi, r.x.col(1).maxCoeff());
  }
  const double px = 0.05 * (x_hi - x_lo), py = 0.05 * (y_hi - y_lo);
  // Panel::px maps t to the horizontal axis, so x1 plays the role of t.
  const Panel p{margin, margin, size, size * (y_hi - y_lo) / (x_hi - x_lo),
                x_lo - px, x_hi + px, y_lo - py, y_hi + py};
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\""
      << p.h + 2 * margin << "\">\n";
  frame(out, p, "x1 vs x2");
  out << "<rect x=\"" << fmt(p.px(c.x_min(0))) << "\" y=\"" << fmt(p.py(c.x_max(1))) << "\" width=\""
      << fmt(p.px(c.x_max(0)) - p.px(c.x_min(0))) << "\" height=\""
      << fmt(p.py(c.x_min(1)) - p.py(c.x_max(1)))
      << "\" fill=\"none\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& x = runs[i].x;
    polyline(out, p, x.rows(), [&](Eigen::Index k) { return std::pair{x(k, 0), x(k, 1)}; },
             kColors[i % 8], false);
    out << "<circle cx=\"" << fmt(p.px(x(0, 0))) << "\" cy=\"" << fmt(p.py(x(0, 1)))
        << "\" r=\"3\" fill=\"" << kColors[i % 8] << "\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace midpc::harness
