#pragma once

// Bounded-variable primal simplex for sparse linear programs.
//
// Problems are stated in row form (each row tagged <=, = or >=) with per
// variable bounds.  Internally every row receives a logical variable so the
// computational form is  A x + s = b,  l <= (x, s) <= u.  Independent blocks
// of the constraint matrix are detected and solved separately.

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fluidscale::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { LessEqual, Equal, GreaterEqual };

struct Term {
  int var = 0;
  double coef = 0.0;
};

struct Row {
  std::vector<Term> terms;
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
  std::string name;
};

/// Minimisation problem:  min c'x + offset  s.t. rows, lower <= x <= upper.
struct LpProblem {
  std::vector<double> cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::string> var_names;
  std::vector<Row> rows;
  double cost_offset = 0.0;

  int add_variable(double c, double lo = 0.0, double hi = kInf, std::string name = {}) {
    cost.push_back(c);
    lower.push_back(lo);
    upper.push_back(hi);
    var_names.push_back(std::move(name));
    return static_cast<int>(cost.size()) - 1;
  }

  int add_row(std::vector<Term> terms, Sense sense, double rhs, std::string name = {}) {
    rows.push_back(Row{std::move(terms), sense, rhs, std::move(name)});
    return static_cast<int>(rows.size()) - 1;
  }

  int num_vars() const { return static_cast<int>(cost.size()); }
  int num_rows() const { return static_cast<int>(rows.size()); }

  /// Throws std::invalid_argument on malformed input.
  void check() const {
    const auto n = cost.size();
    if (lower.size() != n || upper.size() != n)
      throw std::invalid_argument("lp: bound vectors do not match objective length");
    if (!var_names.empty() && var_names.size() != n)
      throw std::invalid_argument("lp: name vector does not match objective length");
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(cost[j])) throw std::invalid_argument("lp: non-finite objective coefficient");
      if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j] ||
          lower[j] == kInf || upper[j] == -kInf)
        throw std::invalid_argument("lp: invalid bounds on variable " + std::to_string(j));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!std::isfinite(rows[i].rhs))
        throw std::invalid_argument("lp: non-finite rhs on row " + std::to_string(i));
      for (const auto& t : rows[i].terms) {
        if (t.var < 0 || static_cast<std::size_t>(t.var) >= n)
          throw std::invalid_argument("lp: row " + std::to_string(i) + " references unknown variable");
        if (!std::isfinite(t.coef))
          throw std::invalid_argument("lp: non-finite coefficient on row " + std::to_string(i));
      }
    }
  }
};

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::IterationLimit: return "iteration_limit";
  }
  return "?";
}

enum class VarStatus : std::uint8_t { Basic, AtLower, AtUpper, AtZero };

/// Basis over structural and logical (one per row) variables; usable as a
/// warm start for a later solve of the same problem.
struct Basis {
  std::vector<VarStatus> structural;
  std::vector<VarStatus> logical;
};

struct SolveOptions {
  double feas_tol = 1e-7;
  double opt_tol = 1e-9;
  long max_iters = 5'000'000;
  int refactor_interval = 100;
  // consecutive degenerate pivots before switching to Bland's rule
  int stall_threshold = 50;
  const Basis* warm_start = nullptr;
};

struct LpSolution {
  Status status = Status::Infeasible;
  std::vector<double> x;
  std::vector<double> row_activity;
  std::vector<double> duals;          // one per row
  std::vector<double> reduced_costs;  // one per structural variable
  double objective = 0.0;
  long iterations = 0;
  Basis basis;
  std::vector<int> violated_rows;  // rows with residual infeasibility when Infeasible
  std::string message;
};

namespace detail {

struct Block {
  std::vector<int> rows;
  std::vector<int> vars;
};

// Partition rows and variables into independent blocks (connected components
// of the row/variable incidence graph).  Variables in no row form no block.
inline std::vector<Block> find_blocks(const LpProblem& p) {
  const int n = p.num_vars();
  const int m = p.num_rows();
  std::vector<int> parent(static_cast<std::size_t>(n + m));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  for (int i = 0; i < m; ++i)
    for (const auto& t : p.rows[i].terms) {
      int a = find(n + i), b = find(t.var);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  std::vector<int> block_of(static_cast<std::size_t>(n + m), -1);
  std::vector<Block> blocks;
  for (int i = 0; i < m; ++i) {
    int r = find(n + i);
    if (block_of[r] < 0) {
      block_of[r] = static_cast<int>(blocks.size());
      blocks.emplace_back();
    }
    blocks[block_of[r]].rows.push_back(i);
  }
  for (int j = 0; j < n; ++j) {
    int r = find(j);
    if (block_of[r] >= 0) blocks[block_of[r]].vars.push_back(j);
  }
  return blocks;
}

// Simplex over one block.  Variable layout: [0, n) structural, [n, n+m)
// logical, [n+m, n+2m) artificial (only used when art_sign != 0).
class BoundedSimplex {
 public:
  BoundedSimplex(const LpProblem& p, const Block& blk, const SolveOptions& opts)
      : opts_(opts), m_(static_cast<int>(blk.rows.size())), n_(static_cast<int>(blk.vars.size())) {
    std::vector<int> local(static_cast<std::size_t>(p.num_vars()), -1);
    for (int j = 0; j < n_; ++j) local[blk.vars[j]] = j;

    const int total = n_ + 2 * m_;
    lo_.assign(total, 0.0);
    up_.assign(total, 0.0);
    cost_.assign(total, 0.0);
    x_.assign(total, 0.0);
    status_.assign(total, VarStatus::AtLower);
    pos_.assign(total, -1);
    art_sign_.assign(m_, 0);
    row_scale_.assign(m_, 1.0);
    b_.assign(m_, 0.0);

    for (int j = 0; j < n_; ++j) {
      lo_[j] = p.lower[blk.vars[j]];
      up_[j] = p.upper[blk.vars[j]];
      cost_[j] = p.cost[blk.vars[j]];
    }

    // column-major copy of the scaled block matrix
    std::vector<std::vector<std::pair<int, double>>> cols(n_);
    for (int i = 0; i < m_; ++i) {
      const Row& row = p.rows[blk.rows[i]];
      double amax = 0.0;
      for (const auto& t : row.terms) amax = std::max(amax, std::abs(t.coef));
      // power-of-two scaling is exact
      double scale = amax > 0.0 ? std::exp2(-std::round(std::log2(amax))) : 1.0;
      row_scale_[i] = scale;
      b_[i] = row.rhs * scale;
      for (const auto& t : row.terms)
        if (t.coef != 0.0) cols[local[t.var]].emplace_back(i, t.coef * scale);
      const int s = n_ + i;
      switch (row.sense) {
        case Sense::LessEqual: lo_[s] = 0.0; up_[s] = kInf; break;
        case Sense::GreaterEqual: lo_[s] = -kInf; up_[s] = 0.0; break;
        case Sense::Equal: lo_[s] = 0.0; up_[s] = 0.0; break;
      }
    }
    col_start_.assign(n_ + 1, 0);
    for (int j = 0; j < n_; ++j) {
      // merge duplicate entries for the same row
      auto& c = cols[j];
      std::sort(c.begin(), c.end());
      std::vector<std::pair<int, double>> merged;
      for (const auto& e : c) {
        if (!merged.empty() && merged.back().first == e.first) merged.back().second += e.second;
        else merged.push_back(e);
      }
      for (const auto& e : merged) {
        row_idx_.push_back(e.first);
        val_.push_back(e.second);
      }
      col_start_[j + 1] = static_cast<int>(row_idx_.size());
    }
    for (int a = n_ + m_; a < total; ++a) {
      lo_[a] = 0.0;
      up_[a] = 0.0;
    }
  }

  Status run(const Basis* warm, const std::vector<int>& warm_rows, const std::vector<int>& warm_vars) {
    bool warm_ok = warm != nullptr && try_warm_start(*warm, warm_rows, warm_vars);
    if (!warm_ok) {
      cold_start();
      bool need_phase1 = std::any_of(art_sign_.begin(), art_sign_.end(), [](int s) { return s != 0; });
      if (need_phase1) {
        std::vector<double> phase1(lo_.size(), 0.0);
        for (int i = 0; i < m_; ++i)
          if (art_sign_[i] != 0) phase1[n_ + m_ + i] = 1.0;
        Status st = iterate(phase1, true);
        if (st == Status::IterationLimit) return st;
        for (int i = 0; i < m_; ++i) {
          const int a = n_ + m_ + i;
          if (art_sign_[i] != 0 && x_[a] > opts_.feas_tol) violated_.push_back(i);
        }
        if (!violated_.empty()) return Status::Infeasible;
        // artificials are fixed at zero from here on
        for (int i = 0; i < m_; ++i) {
          const int a = n_ + m_ + i;
          if (art_sign_[i] == 0) continue;
          up_[a] = 0.0;
          if (pos_[a] < 0) x_[a] = 0.0;
        }
        recompute_basics();
      }
    }
    return iterate(cost_, false);
  }

  long iterations() const { return iters_; }
  const std::vector<int>& violated_rows() const { return violated_; }

  void export_solution(std::vector<double>& x, std::vector<double>& duals, std::vector<double>& reduced,
                       Basis& basis, const Block& blk) const {
    for (int j = 0; j < n_; ++j) {
      x[blk.vars[j]] = x_[j];
      basis.structural[blk.vars[j]] = status_[j];
    }
    for (int i = 0; i < m_; ++i) basis.logical[blk.rows[i]] = status_[n_ + i];
    // an artificial still basic at zero: report its row's logical as basic
    for (int i = 0; i < m_; ++i) {
      const int a = n_ + m_ + i;
      if (art_sign_[i] != 0 && pos_[a] >= 0) basis.logical[blk.rows[i]] = VarStatus::Basic;
    }
    std::vector<double> y = duals_for(cost_);
    for (int i = 0; i < m_; ++i) duals[blk.rows[i]] = y[i] * row_scale_[i];
    for (int j = 0; j < n_; ++j) {
      double d = cost_[j];
      for (int k = col_start_[j]; k < col_start_[j + 1]; ++k) d -= y[row_idx_[k]] * val_[k];
      reduced[blk.vars[j]] = status_[j] == VarStatus::Basic ? 0.0 : d;
    }
  }

 private:
  struct Eta {
    int row;
    double pivot;
    std::vector<int> idx;
    std::vector<double> val;
  };

  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  const SolveOptions& opts_;
  int m_, n_;
  std::vector<double> lo_, up_, cost_, x_, b_, row_scale_;
  std::vector<VarStatus> status_;
  std::vector<int> pos_, basis_head_, art_sign_, violated_;
  std::vector<int> col_start_, row_idx_;
  std::vector<double> val_;
  mutable Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
  std::vector<Eta> etas_;
  long iters_ = 0;

  // entries of the column of variable v
  template <typename F>
  void for_column(int v, F&& f) const {
    if (v < n_) {
      for (int k = col_start_[v]; k < col_start_[v + 1]; ++k) f(row_idx_[k], val_[k]);
    } else if (v < n_ + m_) {
      f(v - n_, 1.0);
    } else {
      f(v - n_ - m_, static_cast<double>(art_sign_[v - n_ - m_]));
    }
  }

  double nonbasic_value(int v) const {
    switch (status_[v]) {
      case VarStatus::AtLower: return lo_[v];
      case VarStatus::AtUpper: return up_[v];
      default: return 0.0;
    }
  }

  void place_nonbasic(int v) {
    if (std::isfinite(lo_[v])) status_[v] = VarStatus::AtLower;
    else if (std::isfinite(up_[v])) status_[v] = VarStatus::AtUpper;
    else status_[v] = VarStatus::AtZero;
    x_[v] = nonbasic_value(v);
  }

  void cold_start() {
    const int total = static_cast<int>(lo_.size());
    std::fill(pos_.begin(), pos_.end(), -1);
    std::fill(art_sign_.begin(), art_sign_.end(), 0);
    for (int v = 0; v < n_ + m_; ++v) place_nonbasic(v);
    for (int a = n_ + m_; a < total; ++a) {
      lo_[a] = up_[a] = x_[a] = 0.0;
      status_[a] = VarStatus::AtLower;
    }
    std::vector<double> res(b_);
    for (int j = 0; j < n_; ++j)
      if (x_[j] != 0.0)
        for (int k = col_start_[j]; k < col_start_[j + 1]; ++k) res[row_idx_[k]] -= val_[k] * x_[j];
    basis_head_.assign(m_, -1);
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      if (res[i] >= lo_[s] - opts_.feas_tol && res[i] <= up_[s] + opts_.feas_tol) {
        make_basic(s, i, res[i]);
      } else {
        double bound = res[i] < lo_[s] ? lo_[s] : up_[s];
        status_[s] = bound == lo_[s] ? VarStatus::AtLower : VarStatus::AtUpper;
        x_[s] = bound;
        const int a = n_ + m_ + i;
        art_sign_[i] = res[i] - bound > 0 ? 1 : -1;
        lo_[a] = 0.0;
        up_[a] = kInf;
        make_basic(a, i, std::abs(res[i] - bound));
      }
    }
    refactor();
  }

  void make_basic(int v, int r, double value) {
    status_[v] = VarStatus::Basic;
    pos_[v] = r;
    basis_head_[r] = v;
    x_[v] = value;
  }

  bool try_warm_start(const Basis& warm, const std::vector<int>& rows, const std::vector<int>& vars) {
    std::fill(pos_.begin(), pos_.end(), -1);
    basis_head_.clear();
    for (int j = 0; j < n_; ++j) status_[j] = warm.structural[vars[j]];
    for (int i = 0; i < m_; ++i) status_[n_ + i] = warm.logical[rows[i]];
    for (int v = 0; v < n_ + m_; ++v) {
      if (status_[v] == VarStatus::Basic) {
        pos_[v] = static_cast<int>(basis_head_.size());
        basis_head_.push_back(v);
      } else {
        // reject statuses that contradict the bounds
        if ((status_[v] == VarStatus::AtLower && !std::isfinite(lo_[v])) ||
            (status_[v] == VarStatus::AtUpper && !std::isfinite(up_[v])))
          return false;
        x_[v] = nonbasic_value(v);
      }
    }
    if (static_cast<int>(basis_head_.size()) != m_) return false;
    if (!refactor()) return false;
    recompute_basics();
    for (int r = 0; r < m_; ++r) {
      const int v = basis_head_[r];
      if (x_[v] < lo_[v] - opts_.feas_tol || x_[v] > up_[v] + opts_.feas_tol) return false;
    }
    return true;
  }

  bool refactor() {
    etas_.clear();
    if (m_ == 0) return true;
    std::vector<Eigen::Triplet<double, int>> trips;
    trips.reserve(static_cast<std::size_t>(m_) * 3);
    for (int r = 0; r < m_; ++r)
      for_column(basis_head_[r], [&](int i, double v) { trips.emplace_back(i, r, v); });
    SpMat B(m_, m_);
    B.setFromTriplets(trips.begin(), trips.end());
    B.makeCompressed();
    lu_.analyzePattern(B);
    lu_.factorize(B);
    return lu_.info() == Eigen::Success;
  }

  std::vector<double> ftran(int v) const {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
    for_column(v, [&](int i, double a) { rhs[i] += a; });
    Eigen::VectorXd sol = lu_.solve(rhs);
    std::vector<double> out(sol.data(), sol.data() + m_);
    for (const auto& e : etas_) {
      double& pr = out[e.row];
      if (pr == 0.0) continue;
      pr /= e.pivot;
      for (std::size_t k = 0; k < e.idx.size(); ++k) out[e.idx[k]] -= e.val[k] * pr;
    }
    return out;
  }

  std::vector<double> btran(std::vector<double> c) const {
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      double s = c[it->row];
      for (std::size_t k = 0; k < it->idx.size(); ++k) s -= it->val[k] * c[it->idx[k]];
      c[it->row] = s / it->pivot;
    }
    Eigen::Map<const Eigen::VectorXd> rhs(c.data(), m_);
    Eigen::VectorXd sol = lu_.transpose().solve(rhs);
    return std::vector<double>(sol.data(), sol.data() + m_);
  }

  void recompute_basics() {
    if (m_ == 0) return;
    Eigen::VectorXd rhs(m_);
    for (int i = 0; i < m_; ++i) rhs[i] = b_[i];
    const int total = static_cast<int>(lo_.size());
    for (int v = 0; v < total; ++v) {
      if (status_[v] == VarStatus::Basic || x_[v] == 0.0) continue;
      const double xv = x_[v];
      for_column(v, [&](int i, double a) { rhs[i] -= a * xv; });
    }
    Eigen::VectorXd sol = lu_.solve(rhs);
    std::vector<double> xb(sol.data(), sol.data() + m_);
    for (const auto& e : etas_) {
      double& pr = xb[e.row];
      if (pr == 0.0) continue;
      pr /= e.pivot;
      for (std::size_t k = 0; k < e.idx.size(); ++k) xb[e.idx[k]] -= e.val[k] * pr;
    }
    for (int r = 0; r < m_; ++r) x_[basis_head_[r]] = xb[r];
  }

  std::vector<double> duals_for(const std::vector<double>& c) const {
    if (m_ == 0) return {};
    std::vector<double> cb(m_);
    for (int r = 0; r < m_; ++r) cb[r] = c[basis_head_[r]];
    return btran(std::move(cb));
  }

  Status iterate(const std::vector<double>& c, bool phase1) {
    int since_refactor = static_cast<int>(etas_.size());
    int degenerate_run = 0;
    bool bland = false;

    while (true) {
      if (iters_ >= opts_.max_iters) return Status::IterationLimit;
      if (since_refactor >= opts_.refactor_interval) {
        if (!refactor()) return Status::IterationLimit;
        recompute_basics();
        since_refactor = 0;
      }

      std::vector<double> y = duals_for(c);

      // pricing
      int q = -1;
      double best = 0.0;
      double dq = 0.0;
      // artificials only ever start basic; once out they stay out
      for (int v = 0; v < n_ + m_; ++v) {
        if (status_[v] == VarStatus::Basic || lo_[v] == up_[v]) continue;
        double d = c[v];
        for_column(v, [&](int i, double a) { d -= y[i] * a; });
        bool ok = (status_[v] == VarStatus::AtLower && d < -opts_.opt_tol) ||
                  (status_[v] == VarStatus::AtUpper && d > opts_.opt_tol) ||
                  (status_[v] == VarStatus::AtZero && std::abs(d) > opts_.opt_tol);
        if (!ok) continue;
        if (bland) {
          q = v;
          dq = d;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          q = v;
          dq = d;
        }
      }

      if (q < 0) {
        // confirm on a fresh factorisation before declaring optimality
        if (etas_.empty()) return Status::Optimal;
        if (!refactor()) return Status::IterationLimit;
        recompute_basics();
        since_refactor = 0;
        continue;
      }

      const double dir = dq < 0 ? 1.0 : -1.0;
      std::vector<double> alpha = ftran(q);

      // ratio test; basic x_B[r] moves by -theta * dir * alpha[r]
      const double range = up_[q] - lo_[q];
      const double piv_tol = 1e-9;
      int leave = -1;
      double theta = kInf;
      if (!bland) {
        const double delta = opts_.feas_tol * 0.5;
        double theta_max = kInf;
        for (int r = 0; r < m_; ++r) {
          const double a = alpha[r];
          if (std::abs(a) <= piv_tol) continue;
          const int v = basis_head_[r];
          const double rate = -dir * a;
          double lim = kInf;
          if (rate < 0 && std::isfinite(lo_[v])) lim = (x_[v] - lo_[v] + delta) / -rate;
          else if (rate > 0 && std::isfinite(up_[v])) lim = (up_[v] + delta - x_[v]) / rate;
          theta_max = std::min(theta_max, lim);
        }
        if (theta_max < kInf) {
          double best_piv = 0.0;
          for (int r = 0; r < m_; ++r) {
            const double a = alpha[r];
            if (std::abs(a) <= piv_tol) continue;
            const int v = basis_head_[r];
            const double rate = -dir * a;
            double lim = kInf;
            if (rate < 0 && std::isfinite(lo_[v])) lim = (x_[v] - lo_[v]) / -rate;
            else if (rate > 0 && std::isfinite(up_[v])) lim = (up_[v] - x_[v]) / rate;
            if (lim <= theta_max && std::abs(a) > best_piv) {
              best_piv = std::abs(a);
              leave = r;
              theta = std::max(lim, 0.0);
            }
          }
        }
      } else {
        for (int r = 0; r < m_; ++r) {
          const double a = alpha[r];
          if (std::abs(a) <= piv_tol) continue;
          const int v = basis_head_[r];
          const double rate = -dir * a;
          double lim = kInf;
          if (rate < 0 && std::isfinite(lo_[v])) lim = std::max((x_[v] - lo_[v]) / -rate, 0.0);
          else if (rate > 0 && std::isfinite(up_[v])) lim = std::max((up_[v] - x_[v]) / rate, 0.0);
          if (lim < theta - 1e-12 || (std::abs(lim - theta) <= 1e-12 && leave >= 0 && v < basis_head_[leave])) {
            theta = lim;
            leave = r;
          }
        }
      }

      const bool flip = std::isfinite(range) && range <= theta;
      if (!flip && leave < 0) {
        if (phase1) return Status::Infeasible;  // cannot happen for a bounded phase-1 objective
        return Status::Unbounded;
      }
      if (flip) theta = range;

      ++iters_;
      if (theta <= 1e-12) {
        if (++degenerate_run > opts_.stall_threshold) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }

      // apply step
      for (int r = 0; r < m_; ++r)
        if (alpha[r] != 0.0) x_[basis_head_[r]] -= theta * dir * alpha[r];

      if (flip) {
        status_[q] = dir > 0 ? VarStatus::AtUpper : VarStatus::AtLower;
        x_[q] = nonbasic_value(q);
        continue;
      }

      const int out = basis_head_[leave];
      const double rate_out = -dir * alpha[leave];
      x_[q] += dir * theta;
      // leaving variable goes to the bound it hit
      if (rate_out < 0) {
        status_[out] = VarStatus::AtLower;
        x_[out] = lo_[out];
      } else {
        status_[out] = VarStatus::AtUpper;
        x_[out] = up_[out];
      }
      if (lo_[out] == up_[out]) status_[out] = VarStatus::AtLower;
      pos_[out] = -1;
      status_[q] = VarStatus::Basic;
      pos_[q] = leave;
      basis_head_[leave] = q;

      Eta e;
      e.row = leave;
      e.pivot = alpha[leave];
      for (int r = 0; r < m_; ++r)
        if (r != leave && std::abs(alpha[r]) > 1e-14) {
          e.idx.push_back(r);
          e.val.push_back(alpha[r]);
        }
      etas_.push_back(std::move(e));
      ++since_refactor;
      if (std::abs(alpha[leave]) < 1e-7) since_refactor = opts_.refactor_interval;  // unstable pivot
    }
  }
};

}  // namespace detail

/// Solves `p`.  Deterministic: identical inputs give identical outputs.
inline LpSolution solve(const LpProblem& p, const SolveOptions& opts = {}) {
  p.check();
  const int n = p.num_vars();
  const int m = p.num_rows();
  LpSolution sol;
  sol.x.assign(n, 0.0);
  sol.duals.assign(m, 0.0);
  sol.reduced_costs.assign(n, 0.0);
  sol.basis.structural.assign(n, VarStatus::AtLower);
  sol.basis.logical.assign(m, VarStatus::Basic);
  sol.status = Status::Optimal;

  if (opts.warm_start &&
      (opts.warm_start->structural.size() != static_cast<std::size_t>(n) ||
       opts.warm_start->logical.size() != static_cast<std::size_t>(m)))
    throw std::invalid_argument("lp: warm-start basis does not match problem dimensions");

  // variables that appear in no row sit at their cheapest bound
  std::vector<char> in_row(static_cast<std::size_t>(n), 0);
  for (const auto& r : p.rows)
    for (const auto& t : r.terms) in_row[t.var] = 1;
  bool unbounded = false;
  for (int j = 0; j < n; ++j) {
    if (in_row[j]) continue;
    const double c = p.cost[j], lo = p.lower[j], hi = p.upper[j];
    if (c > 0) {
      if (!std::isfinite(lo)) unbounded = true;
      sol.x[j] = lo;
      sol.basis.structural[j] = VarStatus::AtLower;
    } else if (c < 0) {
      if (!std::isfinite(hi)) unbounded = true;
      sol.x[j] = hi;
      sol.basis.structural[j] = VarStatus::AtUpper;
    } else if (std::isfinite(lo)) {
      sol.x[j] = lo;
    } else if (std::isfinite(hi)) {
      sol.x[j] = hi;
      sol.basis.structural[j] = VarStatus::AtUpper;
    } else {
      sol.x[j] = 0.0;
      sol.basis.structural[j] = VarStatus::AtZero;
    }
    sol.reduced_costs[j] = c;
  }

  bool infeasible = false;
  bool limit = false;
  SolveOptions local = opts;
  for (const auto& blk : detail::find_blocks(p)) {
    local.max_iters = std::max(0L, opts.max_iters - sol.iterations);
    detail::BoundedSimplex simplex(p, blk, local);
    Status st = simplex.run(opts.warm_start, blk.rows, blk.vars);
    sol.iterations += simplex.iterations();
    if (st == Status::Infeasible) {
      infeasible = true;
      for (int r : simplex.violated_rows()) sol.violated_rows.push_back(blk.rows[r]);
      continue;
    }
    if (st == Status::IterationLimit) {
      limit = true;
      break;
    }
    if (st == Status::Unbounded) unbounded = true;
    simplex.export_solution(sol.x, sol.duals, sol.reduced_costs, sol.basis, blk);
  }
  std::sort(sol.violated_rows.begin(), sol.violated_rows.end());

  if (limit) sol.status = Status::IterationLimit;
  else if (infeasible) sol.status = Status::Infeasible;
  else if (unbounded) sol.status = Status::Unbounded;

  sol.row_activity.assign(m, 0.0);
  for (int i = 0; i < m; ++i)
    for (const auto& t : p.rows[i].terms) sol.row_activity[i] += t.coef * sol.x[t.var];
  sol.objective = p.cost_offset;
  for (int j = 0; j < n; ++j) sol.objective += p.cost[j] * sol.x[j];
  if (sol.status == Status::Infeasible) {
    sol.message = std::to_string(sol.violated_rows.size()) + " row(s) cannot be satisfied";
    for (int r : sol.violated_rows)
      if (!p.rows[r].name.empty()) {
        sol.message += "; first: " + p.rows[r].name;
        break;
      }
  }
  return sol;
}

/// Plain-text dump, one row per line, for debugging only.
inline void dump(const LpProblem& p, std::ostream& os) {
  auto name = [&](int j) {
    return (j < static_cast<int>(p.var_names.size()) && !p.var_names[j].empty()) ? p.var_names[j]
                                                                                  : "v" + std::to_string(j);
  };
  os << std::fixed << std::setprecision(6);
  os << "min";
  for (int j = 0; j < p.num_vars(); ++j)
    if (p.cost[j] != 0.0) os << ' ' << p.cost[j] << '*' << name(j);
  os << " + " << p.cost_offset << '\n';
  for (int i = 0; i < p.num_rows(); ++i) {
    const auto& r = p.rows[i];
    os << (r.name.empty() ? "r" + std::to_string(i) : r.name) << ':';
    for (const auto& t : r.terms) os << ' ' << t.coef << '*' << name(t.var);
    os << (r.sense == Sense::LessEqual ? " <= " : r.sense == Sense::Equal ? " = " : " >= ") << r.rhs << '\n';
  }
  for (int j = 0; j < p.num_vars(); ++j)
    if (p.lower[j] != 0.0 || p.upper[j] != kInf) os << name(j) << " in [" << p.lower[j] << ", " << p.upper[j] << "]\n";
}

}  // namespace fluidscale::lp
