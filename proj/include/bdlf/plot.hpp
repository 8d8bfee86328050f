#pragma once

// Minimal SVG output: line charts for logged series and a 2-D PCA scatter of
// embeddings (colour = identity, marker = modality). Output is a pure
// function of the inputs.

#include "bdlf/json_util.hpp"
#include "bdlf/nn.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdlf::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

/// Fixed categorical palette, cycled.
inline std::string colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                  "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
                                  "#8c6d31", "#843c39", "#7b4173", "#3182bd"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
  double px(double x) const { return L + (x - x0) / (x1 - x0) * (W - L - R); }
  double py(double y) const { return H - B - (y - y0) / (y1 - y0) * (H - T - B); }
};

inline Frame frame_for(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  return {x0, x1, y0 - pad, y1 + pad};
}

inline std::string axes(const Frame& f, const std::string& title, const std::string& xlabel,
                        const std::string& ylabel) {
  std::string s;
  s += "<rect width=\"" + fmt(Frame::W) + "\" height=\"" + fmt(Frame::H) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(Frame::W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
       "</text>\n";
  s += "<line x1=\"" + fmt(Frame::L) + "\" y1=\"" + fmt(Frame::H - Frame::B) + "\" x2=\"" +
       fmt(Frame::W - Frame::R) + "\" y2=\"" + fmt(Frame::H - Frame::B) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(Frame::L) + "\" y1=\"" + fmt(Frame::T) + "\" x2=\"" + fmt(Frame::L) + "\" y2=\"" +
       fmt(Frame::H - Frame::B) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
    s += "<text x=\"" + fmt(f.px(xv)) + "\" y=\"" + fmt(Frame::H - Frame::B + 16) +
         "\" text-anchor=\"middle\" font-size=\"11\">" + fmt_tick(xv) + "</text>\n";
    s += "<text x=\"" + fmt(Frame::L - 6) + "\" y=\"" + fmt(f.py(yv) + 4) +
         "\" text-anchor=\"end\" font-size=\"11\">" + fmt_tick(yv) + "</text>\n";
  }
  s += "<text x=\"" + fmt((Frame::L + Frame::W - Frame::R) / 2) + "\" y=\"" + fmt(Frame::H - 12) +
       "\" text-anchor=\"middle\" font-size=\"12\">" + escape(xlabel) + "</text>\n";
  s += "<text x=\"16\" y=\"" + fmt((Frame::T + Frame::H - Frame::B) / 2) +
       "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " +
       fmt((Frame::T + Frame::H - Frame::B) / 2) + ")\">" + escape(ylabel) + "</text>\n";
  return s;
}

inline std::string open_svg() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(Frame::W) + "\" height=\"" + fmt(Frame::H) +
         "\" viewBox=\"0 0 " + fmt(Frame::W) + " " + fmt(Frame::H) + "\">\n";
}

}  // namespace detail

/// Line chart of several series sharing the axes.
inline std::string line_chart(const std::vector<Series>& series, const std::string& title,
                              const std::string& xlabel, const std::string& ylabel) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  bool any = false;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("line_chart: x/y length mismatch in " + s.name);
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      any = true;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!any) throw std::invalid_argument("line_chart: nothing to plot");
  const auto f = detail::frame_for(x0, x1, y0, y1);
  std::string out = detail::open_svg() + detail::axes(f, title, xlabel, ylabel);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      pts += detail::fmt(f.px(s.x[i])) + "," + detail::fmt(f.py(s.y[i])) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + detail::colour(k) + "\" stroke-width=\"1.5\" points=\"" + pts +
           "\"/>\n";
    const double ly = detail::Frame::T + 18.0 * static_cast<double>(k);
    const double lx = detail::Frame::W - detail::Frame::R + 12;
    out += "<line x1=\"" + detail::fmt(lx) + "\" y1=\"" + detail::fmt(ly) + "\" x2=\"" + detail::fmt(lx + 20) +
           "\" y2=\"" + detail::fmt(ly) + "\" stroke=\"" + detail::colour(k) + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + detail::fmt(lx + 26) + "\" y=\"" + detail::fmt(ly + 4) + "\" font-size=\"11\">" +
           detail::escape(s.name) + "</text>\n";
  }
  return out + "</svg>\n";
}

struct Projection2d {
  Matrix<double> coords;            // [N x 2]
  std::vector<double> explained;    // variance fraction of the two axes
};

/// Projection onto the two leading principal axes. Each axis' sign is fixed
/// so its largest-magnitude loading is positive.
inline Projection2d pca_2d(const Matrix<double>& x) {
  if (x.rows() < 2 || x.cols() < 1) throw std::invalid_argument("pca_2d: need >= 2 rows");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix<double> c = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::Index d = cov.rows();
  const double total = std::max(es.eigenvalues().sum(), 1e-300);
  Projection2d p;
  p.coords = Matrix<double>::Zero(x.rows(), 2);
  for (int k = 0; k < 2 && k < d; ++k) {
    Eigen::VectorXd axis = es.eigenvectors().col(d - 1 - k);
    Eigen::Index arg;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    p.coords.col(k) = c * axis;
    p.explained.push_back(es.eigenvalues()(d - 1 - k) / total);
  }
  return p;
}

struct ScatterOutput {
  std::string svg;
  Json legend;
};

/// Scatter of 2-D points; `modality[i]` 0 draws a circle, 1 a square.
inline ScatterOutput scatter(const Matrix<double>& xy, const std::vector<int>& ids, const std::vector<int>& modality,
                             const std::vector<std::string>& modality_names, const std::string& title) {
  const auto n = static_cast<std::size_t>(xy.rows());
  if (ids.size() != n || modality.size() != n) throw std::invalid_argument("scatter: metadata length mismatch");
  if (n == 0) throw std::invalid_argument("scatter: no points");
  std::map<int, std::size_t> colour_index;
  for (int id : ids) colour_index.emplace(id, 0);
  std::size_t k = 0;
  for (auto& [id, idx] : colour_index) idx = k++;

  const auto f = detail::frame_for(xy.col(0).minCoeff(), xy.col(0).maxCoeff(), xy.col(1).minCoeff(),
                                   xy.col(1).maxCoeff());
  ScatterOutput out;
  out.svg = detail::open_svg() + detail::axes(f, title, "PC1", "PC2");
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    const std::string c = detail::colour(colour_index.at(ids[i]));
    const double px = f.px(xy(e, 0)), py = f.py(xy(e, 1));
    if (modality[i] == 0) {
      out.svg += "<circle cx=\"" + detail::fmt(px) + "\" cy=\"" + detail::fmt(py) + "\" r=\"3.5\" fill=\"" + c +
                 "\"/>\n";
    } else {
      out.svg += "<rect x=\"" + detail::fmt(px - 3.5) + "\" y=\"" + detail::fmt(py - 3.5) +
                 "\" width=\"7\" height=\"7\" fill=\"none\" stroke=\"" + c + "\" stroke-width=\"1.5\"/>\n";
    }
  }
  out.svg += "</svg>\n";

  Json colours = Json::object();
  for (const auto& [id, idx] : colour_index) colours[std::to_string(id)] = detail::colour(idx);
  Json markers = Json::object();
  const char* shapes[] = {"circle", "square"};
  for (std::size_t m = 0; m < modality_names.size() && m < 2; ++m) markers[modality_names[m]] = shapes[m];
  out.legend = Json{{"encoding", {{"color", "identity"}, {"marker", "modality"}}},
                    {"identity_colors", colours},
                    {"modality_markers", markers},
                    {"n_points", n}};
  return out;
}

}  // namespace bdlf::plot
