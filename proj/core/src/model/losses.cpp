#include "polydeform/model/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "polydeform/autodiff/ops.hpp"
#include "polydeform/error.hpp"
#include "polydeform/geometry/raster.hpp"

namespace polydeform::model {

namespace ops = autodiff::ops;
using geometry::Vec2;

void LossConfig::validate() const {
  if (!(w_chamfer >= 0) || !(w_std >= 0)) throw ValidationError("loss weights must be >= 0");
  if (!(chamfer_mask_px >= 0)) throw ValidationError("loss.chamfer_mask_px must be >= 0");
  if (!(edge_sample_step > 0)) throw ValidationError("loss.edge_sample_step must be > 0");
}

nlohmann::json to_json(const LossConfig& cfg) {
  return {{"w_chamfer", cfg.w_chamfer},
          {"w_std", cfg.w_std},
          {"chamfer_mask_px", cfg.chamfer_mask_px},
          {"edge_sample_step", cfg.edge_sample_step}};
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("loss config must be a JSON object");
  LossConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw ValidationError("loss." + key + " must be a number");
    const double v = value.get<double>();
    if (key == "w_chamfer") cfg.w_chamfer = v;
    else if (key == "w_std") cfg.w_std = v;
    else if (key == "chamfer_mask_px") cfg.chamfer_mask_px = v;
    else if (key == "edge_sample_step") cfg.edge_sample_step = v;
    else throw ValidationError("loss: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::size_t kBruteForceBelow = 48;
}

NearestIndex::NearestIndex(std::vector<Vec2> points) : points_(std::move(points)) {
  if (points_.empty()) throw DegenerateError("NearestIndex: empty point set");
  if (points_.size() < kBruteForceBelow) return;
  double x1 = points_[0].x, y1 = points_[0].y;
  x0_ = x1;
  y0_ = y1;
  for (const auto& p : points_) {
    x0_ = std::min(x0_, p.x);
    y0_ = std::min(y0_, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  const double area = std::max(1.0, (x1 - x0_) * (y1 - y0_));
  cell_ = std::max(1.0, 2.0 * std::sqrt(area / static_cast<double>(points_.size())));
  cols_ = static_cast<int>(std::floor((x1 - x0_) / cell_)) + 1;
  rows_ = static_cast<int>(std::floor((y1 - y0_) / cell_)) + 1;

  const std::size_t cells = static_cast<std::size_t>(cols_) * static_cast<std::size_t>(rows_);
  std::vector<std::size_t> cell_of(points_.size());
  cell_start_.assign(cells + 1, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const int cx = std::min(cols_ - 1, static_cast<int>((points_[i].x - x0_) / cell_));
    const int cy = std::min(rows_ - 1, static_cast<int>((points_[i].y - y0_) / cell_));
    cell_of[i] = static_cast<std::size_t>(cy) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(cx);
    ++cell_start_[cell_of[i] + 1];
  }
  for (std::size_t c = 0; c < cells; ++c) cell_start_[c + 1] += cell_start_[c];
  cell_items_.resize(points_.size());
  std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  // Ascending index order within each cell.
  for (std::size_t i = 0; i < points_.size(); ++i) cell_items_[fill[cell_of[i]]++] = i;
}

NearestIndex::Hit NearestIndex::nearest_brute(Vec2 q) const {
  Hit best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const double dx = q.x - points_[i].x, dy = q.y - points_[i].y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best.squared_distance) best = {i, d2};
  }
  return best;
}

NearestIndex::Hit NearestIndex::nearest(Vec2 q) const {
  if (cell_start_.empty()) return nearest_brute(q);
  const double fx = std::floor((q.x - x0_) / cell_), fy = std::floor((q.y - y0_) / cell_);
  if (fx < -2 || fy < -2 || fx > cols_ + 1 || fy > rows_ + 1) return nearest_brute(q);
  const int cx = static_cast<int>(fx), cy = static_cast<int>(fy);
  const int max_ring = std::max({cx + 1, cy + 1, cols_ - cx, rows_ - cy}) + 1;

  Hit best{0, std::numeric_limits<double>::infinity()};
  auto visit = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= cols_ || y >= rows_) return;
    const std::size_t c = static_cast<std::size_t>(y) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(x);
    for (std::size_t k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
      const std::size_t i = cell_items_[k];
      const double dx = q.x - points_[i].x, dy = q.y - points_[i].y;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best.squared_distance || (d2 == best.squared_distance && i < best.index)) best = {i, d2};
    }
  };
  for (int r = 0; r <= max_ring; ++r) {
    if (r == 0) {
      visit(cx, cy);
    } else {
      for (int x = cx - r; x <= cx + r; ++x) {
        visit(x, cy - r);
        visit(x, cy + r);
      }
      for (int y = cy - r + 1; y <= cy + r - 1; ++y) {
        visit(cx - r, y);
        visit(cx + r, y);
      }
    }
    const double reach = static_cast<double>(r) * cell_;
    if (best.squared_distance < reach * reach) break;
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace {

struct ChamferTerms {
  double value = 0.0;
  std::vector<NearestIndex::Hit> p_to_q;  // per P sample
  std::vector<NearestIndex::Hit> q_to_p;  // per Q sample
  std::vector<bool> p_active, q_active;
};

ChamferTerms chamfer_terms(const std::vector<Vec2>& ps, const std::vector<Vec2>& qs, double mask_px) {
  ChamferTerms out;
  const NearestIndex qi(qs), pi(ps);
  double sp = 0.0, sq = 0.0;
  out.p_to_q.reserve(ps.size());
  for (const auto& p : ps) {
    const auto hit = qi.nearest(p);
    const double d = std::sqrt(hit.squared_distance);
    const bool active = !(mask_px > 0 && d < mask_px);
    out.p_to_q.push_back(hit);
    out.p_active.push_back(active);
    if (active) sp += d;
  }
  for (const auto& q : qs) {
    const auto hit = pi.nearest(q);
    const double d = std::sqrt(hit.squared_distance);
    const bool active = !(mask_px > 0 && d < mask_px);
    out.q_to_p.push_back(hit);
    out.q_active.push_back(active);
    if (active) sq += d;
  }
  out.value = sp / static_cast<double>(ps.size()) + sq / static_cast<double>(qs.size());
  return out;
}

std::vector<Vec2> polygon_samples(const std::vector<geometry::Polygon>& polys, double step) {
  std::vector<Vec2> pts;
  for (const auto& poly : polys) {
    auto e = geometry::rasterize_edges(poly, step);
    pts.insert(pts.end(), e.points.begin(), e.points.end());
  }
  return pts;
}

void require_nondegenerate(const std::vector<Vec2>& v, const char* what) {
  for (const auto& p : v) {
    if (!(p == v[0])) return;
  }
  throw DegenerateError(std::string("chamfer_loss: all vertices of ") + what + " coincide");
}

}  // namespace

template <typename T>
Tensor<T> chamfer_loss(Graph<T>& g, const Tensor<T>& P, const std::vector<geometry::Polygon>& Q,
                       const LossConfig& cfg) {
  if (P.rank() != 2 || P.dim(1) != 2 || P.dim(0) < 3) {
    throw ShapeError("chamfer_loss: P must be [N>=3,2], got " + autodiff::shape_string(P.shape()));
  }
  if (Q.empty()) throw DegenerateError("chamfer_loss: no target polygons");
  for (const auto& q : Q) require_nondegenerate(q.vertices(), "Q");

  const std::size_t n = P.dim(0);
  std::vector<Vec2> verts(n);
  for (std::size_t i = 0; i < n; ++i) {
    verts[i] = {static_cast<double>(P.data()[2 * i]), static_cast<double>(P.data()[2 * i + 1])};
  }
  for (const auto& v : verts) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
      // Propagate as a NaN value so callers see a non-finite loss.
      auto out = Tensor<T>::scalar(std::numeric_limits<T>::quiet_NaN());
      g.verify_finite("chamfer_loss", out);
      return out;
    }
  }
  require_nondegenerate(verts, "P");

  auto layout = geometry::edge_sample_layout(verts, cfg.edge_sample_step);
  const auto ps = geometry::evaluate_samples(layout, verts);
  const auto qs = polygon_samples(Q, cfg.edge_sample_step);
  auto terms = chamfer_terms(ps, qs, cfg.chamfer_mask_px);

  const bool track = g.tracks({&P});
  auto out = Tensor<T>::scalar(static_cast<T>(terms.value), track);
  g.verify_finite("chamfer_loss", out);
  if (track) {
    g.record("chamfer_loss", [P = P, out = out, layout = std::move(layout), ps, qs,
                              terms = std::move(terms)]() mutable {
      if (!out.has_grad() || !P.requires_grad()) return;
      const double go = static_cast<double>(std::as_const(out).grad()[0]);
      std::vector<Vec2> gp(ps.size());
      const double wp = go / static_cast<double>(ps.size());
      const double wq = go / static_cast<double>(qs.size());
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (!terms.p_active[i]) continue;
        const double d2 = terms.p_to_q[i].squared_distance;
        if (d2 == 0.0) continue;
        const Vec2 diff = ps[i] - qs[terms.p_to_q[i].index];
        gp[i] = gp[i] + (wp / std::sqrt(d2)) * diff;
      }
      for (std::size_t j = 0; j < qs.size(); ++j) {
        if (!terms.q_active[j]) continue;
        const double d2 = terms.q_to_p[j].squared_distance;
        if (d2 == 0.0) continue;
        const std::size_t k = terms.q_to_p[j].index;
        const Vec2 diff = ps[k] - qs[j];
        gp[k] = gp[k] + (wq / std::sqrt(d2)) * diff;
      }
      auto gv = P.grad();
      for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& s = layout[i];
        gv[2 * s.from] += static_cast<T>((1.0 - s.t) * gp[i].x);
        gv[2 * s.from + 1] += static_cast<T>((1.0 - s.t) * gp[i].y);
        gv[2 * s.to] += static_cast<T>(s.t * gp[i].x);
        gv[2 * s.to + 1] += static_cast<T>(s.t * gp[i].y);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> std_loss(Graph<T>& g, const Tensor<T>& P) {
  if (P.rank() != 2 || P.dim(1) != 2 || P.dim(0) < 3) {
    throw ShapeError("std_loss: P must be [N>=3,2], got " + autodiff::shape_string(P.shape()));
  }
  auto e = ops::edge_lengths(g, P);
  auto mu = ops::mean(g, e);
  auto centered = ops::add_scalar(g, e, ops::scale(g, mu, T{-1}));
  auto var = ops::mean(g, ops::mul(g, centered, centered));
  return ops::sqrt_eps(g, var, static_cast<T>(1e-8));
}

template <typename T>
LossBreakdown<T> total_loss(Graph<T>& g, const Tensor<T>& P, const std::vector<geometry::Polygon>& Q,
                            const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown<T> out;
  Tensor<T> total;
  auto accumulate = [&](const Tensor<T>& term, double w, double& raw, double& weighted) {
    raw = static_cast<double>(term.data()[0]);
    if (w == 0.0) return;
    auto scaled = ops::scale(g, term, static_cast<T>(w));
    weighted = static_cast<double>(scaled.data()[0]);
    total = total.defined() ? ops::add(g, total, scaled) : scaled;
  };
  {
    Graph<T> untracked(autodiff::GraphOptions{.grad_enabled = false, .check_finite = g.check_finite()});
    Graph<T>& cg = cfg.w_chamfer == 0.0 ? untracked : g;
    accumulate(chamfer_loss(cg, P, Q, cfg), cfg.w_chamfer, out.chamfer, out.weighted_chamfer);
    Graph<T>& sg = cfg.w_std == 0.0 ? untracked : g;
    accumulate(std_loss(sg, P), cfg.w_std, out.std, out.weighted_std);
  }
  out.total = total.defined() ? total : Tensor<T>::scalar(T{0});
  return out;
}

double chamfer_distance(const std::vector<geometry::Polygon>& P, const std::vector<geometry::Polygon>& Q,
                        const LossConfig& cfg) {
  if (P.empty() || Q.empty()) throw DegenerateError("chamfer_distance: empty polygon set");
  return chamfer_terms(polygon_samples(P, cfg.edge_sample_step), polygon_samples(Q, cfg.edge_sample_step),
                       cfg.chamfer_mask_px)
      .value;
}

template Tensor<float> chamfer_loss(Graph<float>&, const Tensor<float>&, const std::vector<geometry::Polygon>&,
                                    const LossConfig&);
template Tensor<double> chamfer_loss(Graph<double>&, const Tensor<double>&, const std::vector<geometry::Polygon>&,
                                     const LossConfig&);
template Tensor<float> std_loss(Graph<float>&, const Tensor<float>&);
template Tensor<double> std_loss(Graph<double>&, const Tensor<double>&);
template LossBreakdown<float> total_loss(Graph<float>&, const Tensor<float>&, const std::vector<geometry::Polygon>&,
                                         const LossConfig&);
template LossBreakdown<double> total_loss(Graph<double>&, const Tensor<double>&,
                                          const std::vector<geometry::Polygon>&, const LossConfig&);

}  // namespace polydeform::model
