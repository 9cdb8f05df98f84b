#pragma once

// Bounded-variable primal simplex with an explicit basis inverse.
//
//   min/max  c'y
//   s.t.     A_eq y  = b_eq
//            G y    <= h
//            lb <= y <= ub      (infinite bounds allowed)
//
// Phase 1 minimizes the sum of artificial variables, phase 2 the objective.
// Pricing is Dantzig (largest reduced cost) with a two-pass Harris ratio test;
// after `bland_after` consecutive degenerate pivots the solver switches to
// Bland's rule for the rest of the solve so it cannot cycle.
//
// Dual conventions for a solution with value V:
//   eq_duals[i]   = dV / d b_eq[i]
//   ineq_duals[i] = |dV / d h[i]| >= 0   (relaxing a row never hurts)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tractnet {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { Minimize, Maximize };

inline const char* sense_name(Sense s) { return s == Sense::Minimize ? "min" : "max"; }

struct SparseRow {
  std::vector<std::size_t> index;
  std::vector<double> value;

  void add(std::size_t j, double v) {
    if (v == 0.0) return;
    index.push_back(j);
    value.push_back(v);
  }
  double dot(const std::vector<double>& y) const {
    double s = 0.0;
    for (std::size_t k = 0; k < index.size(); ++k) s += value[k] * y[index[k]];
    return s;
  }
};

struct LinearProgram {
  Sense sense = Sense::Minimize;
  std::vector<double> objective;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<SparseRow> eq_rows;
  std::vector<double> eq_rhs;
  std::vector<SparseRow> ineq_rows;
  std::vector<double> ineq_rhs;

  std::size_t num_vars() const { return objective.size(); }

  std::size_t add_var(double lb, double ub, double cost = 0.0) {
    objective.push_back(cost);
    lower.push_back(lb);
    upper.push_back(ub);
    return objective.size() - 1;
  }
  std::size_t add_eq(SparseRow row, double rhs) {
    eq_rows.push_back(std::move(row));
    eq_rhs.push_back(rhs);
    return eq_rows.size() - 1;
  }
  std::size_t add_le(SparseRow row, double rhs) {
    ineq_rows.push_back(std::move(row));
    ineq_rhs.push_back(rhs);
    return ineq_rows.size() - 1;
  }

  double evaluate(const std::vector<double>& y) const {
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) s += objective[j] * y[j];
    return s;
  }

  void validate() const {
    const std::size_t n = num_vars();
    if (lower.size() != n || upper.size() != n) throw std::invalid_argument("lp: bound vectors disagree with objective length");
    if (eq_rows.size() != eq_rhs.size() || ineq_rows.size() != ineq_rhs.size())
      throw std::invalid_argument("lp: row/rhs count mismatch");
    for (std::size_t j = 0; j < n; ++j)
      if (lower[j] > upper[j]) throw std::invalid_argument("lp: variable " + std::to_string(j) + " has lb > ub");
    auto check = [n](const std::vector<SparseRow>& rows) {
      for (const auto& r : rows)
        for (auto j : r.index)
          if (j >= n) throw std::invalid_argument("lp: row references variable out of range");
    };
    check(eq_rows);
    check(ineq_rows);
  }

  /// CPLEX-LP text, for cross-checking against external solvers.
  std::string to_lp_format() const {
    std::ostringstream os;
    os.precision(17);
    auto term_list = [&os](const SparseRow& r) {
      bool first = true;
      for (std::size_t k = 0; k < r.index.size(); ++k) {
        const double v = r.value[k];
        os << (v < 0 ? " - " : (first ? " " : " + ")) << std::fabs(v) << " y" << r.index[k];
        first = false;
      }
      if (first) os << " 0 y0";
    };
    os << (sense == Sense::Minimize ? "Minimize\n obj:" : "Maximize\n obj:");
    SparseRow obj;
    for (std::size_t j = 0; j < objective.size(); ++j) obj.add(j, objective[j]);
    term_list(obj);
    os << "\nSubject To\n";
    for (std::size_t i = 0; i < eq_rows.size(); ++i) {
      os << " e" << i << ":";
      term_list(eq_rows[i]);
      os << " = " << eq_rhs[i] << "\n";
    }
    for (std::size_t i = 0; i < ineq_rows.size(); ++i) {
      os << " g" << i << ":";
      term_list(ineq_rows[i]);
      os << " <= " << ineq_rhs[i] << "\n";
    }
    os << "Bounds\n";
    for (std::size_t j = 0; j < num_vars(); ++j) {
      if (std::isinf(lower[j]) && std::isinf(upper[j])) os << " y" << j << " free\n";
      else {
        os << " ";
        if (std::isinf(lower[j])) os << "-inf";
        else os << lower[j];
        os << " <= y" << j << " <= ";
        if (std::isinf(upper[j])) os << "+inf";
        else os << upper[j];
        os << "\n";
      }
    }
    os << "End\n";
    return os.str();
  }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* status_name(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration-limit";
  }
  return "?";
}

struct LpLimits {
  std::size_t max_iterations = 0;  // 0 = 50 * (rows + columns)
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-10;
  std::size_t bland_after = 1000;  // consecutive degenerate pivots
  std::size_t refactor_every = 100;
  double tight_tol = 1e-8;         // for the active-set fingerprint
};

struct LpSolution {
  LpStatus status = LpStatus::IterationLimit;
  double value = 0.0;
  std::vector<double> primal;
  std::vector<double> eq_duals;
  std::vector<double> ineq_duals;
  /// Reduced costs of the minimization form (objective negated for max).
  std::vector<double> reduced_costs;
  /// Sorted ids of tight constraints and bounds: inequality row i -> i,
  /// lower bound of variable j -> m_ineq + 2j, upper bound -> m_ineq + 2j + 1.
  std::vector<std::int64_t> fingerprint;
  std::size_t iterations = 0;
  bool used_bland = false;

  bool optimal() const { return status == LpStatus::Optimal; }
};

namespace detail {

class SimplexEngine {
 public:
  SimplexEngine(const LinearProgram& lp, const LpLimits& lim) : lp_(lp), lim_(lim) {
    n_struct_ = lp.num_vars();
    m_eq_ = lp.eq_rows.size();
    m_ = m_eq_ + lp.ineq_rows.size();
    rhs_.assign(m_, 0.0);
    for (std::size_t i = 0; i < m_eq_; ++i) rhs_[i] = lp.eq_rhs[i];
    for (std::size_t i = 0; i < lp.ineq_rows.size(); ++i) rhs_[m_eq_ + i] = lp.ineq_rhs[i];

    cols_.assign(n_struct_, {});
    for (std::size_t i = 0; i < m_eq_; ++i) {
      const auto& r = lp.eq_rows[i];
      for (std::size_t k = 0; k < r.index.size(); ++k) cols_[r.index[k]].push_back({i, r.value[k]});
    }
    for (std::size_t i = 0; i < lp.ineq_rows.size(); ++i) {
      const auto& r = lp.ineq_rows[i];
      for (std::size_t k = 0; k < r.index.size(); ++k) cols_[r.index[k]].push_back({m_eq_ + i, r.value[k]});
    }
    lb_ = lp.lower;
    ub_ = lp.upper;
    cost_.assign(n_struct_, 0.0);
    const double sgn = lp.sense == Sense::Minimize ? 1.0 : -1.0;
    for (std::size_t j = 0; j < n_struct_; ++j) cost_[j] = sgn * lp.objective[j];
    for (std::size_t i = 0; i < lp.ineq_rows.size(); ++i) {
      cols_.push_back({{m_eq_ + i, 1.0}});
      lb_.push_back(0.0);
      ub_.push_back(kInf);
      cost_.push_back(0.0);
    }
    n_ = cols_.size();
  }

  LpSolution run() {
    LpSolution sol;
    const std::size_t max_iter = lim_.max_iterations ? lim_.max_iterations : 50 * (m_ + n_ + 10);

    x_.assign(n_, 0.0);
    state_.assign(n_, NonbasicLower);
    for (std::size_t j = 0; j < n_struct_; ++j) {
      if (std::isfinite(lb_[j])) { x_[j] = lb_[j]; state_[j] = NonbasicLower; }
      else if (std::isfinite(ub_[j])) { x_[j] = ub_[j]; state_[j] = NonbasicUpper; }
      else { x_[j] = 0.0; state_[j] = NonbasicFree; }
    }
    std::vector<double> r = rhs_;
    for (std::size_t j = 0; j < n_struct_; ++j)
      if (x_[j] != 0.0)
        for (const auto& [i, a] : cols_[j]) r[i] -= a * x_[j];

    basis_.assign(m_, 0);
    binv_.assign(m_ * m_, 0.0);
    first_art_ = n_;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i >= m_eq_ && r[i] >= 0.0) {
        const std::size_t s = n_struct_ + (i - m_eq_);
        basis_[i] = s;
        state_[s] = Basic;
        x_[s] = r[i];
        binv_[i * m_ + i] = 1.0;
        continue;
      }
      const double sign = r[i] >= 0.0 ? 1.0 : -1.0;
      cols_.push_back({{i, sign}});
      lb_.push_back(0.0);
      ub_.push_back(kInf);
      cost_.push_back(0.0);
      x_.push_back(std::fabs(r[i]));
      state_.push_back(Basic);
      basis_[i] = cols_.size() - 1;
      binv_[i * m_ + i] = sign;
    }
    n_ = cols_.size();

    iterations_ = 0;
    if (n_ > first_art_) {
      std::vector<double> phase1(n_, 0.0);
      for (std::size_t j = first_art_; j < n_; ++j) phase1[j] = 1.0;
      const LpStatus st = iterate(phase1, max_iter);
      if (st == LpStatus::IterationLimit) return finish(sol, st);
      double infeas = 0.0;
      for (std::size_t j = first_art_; j < n_; ++j) infeas += x_[j];
      double scale = 1.0;
      for (double v : rhs_) scale = std::max(scale, std::fabs(v));
      if (infeas > 1e-9 * scale) return finish(sol, LpStatus::Infeasible);
      for (std::size_t j = first_art_; j < n_; ++j) {
        lb_[j] = ub_[j] = 0.0;
        if (state_[j] != Basic) { x_[j] = 0.0; state_[j] = NonbasicLower; }
      }
      drive_out_artificials();
    }
    std::vector<double> c2(n_, 0.0);
    std::copy(cost_.begin(), cost_.end(), c2.begin());
    const LpStatus st = iterate(c2, max_iter);
    return finish(sol, st);
  }

 private:
  enum State : std::uint8_t { Basic, NonbasicLower, NonbasicUpper, NonbasicFree };
  using Column = std::vector<std::pair<std::size_t, double>>;

  bool is_fixed(std::size_t j) const { return lb_[j] == ub_[j]; }

  void compute_duals(const std::vector<double>& c, std::vector<double>& pi) const {
    pi.assign(m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      const double cb = c[basis_[i]];
      if (cb == 0.0) continue;
      const double* row = &binv_[i * m_];
      for (std::size_t k = 0; k < m_; ++k) pi[k] += cb * row[k];
    }
  }

  double reduced_cost(const std::vector<double>& c, const std::vector<double>& pi, std::size_t j) const {
    double d = c[j];
    for (const auto& [i, a] : cols_[j]) d -= pi[i] * a;
    return d;
  }

  void ftran(std::size_t j, std::vector<double>& alpha) const {
    alpha.assign(m_, 0.0);
    for (const auto& [k, a] : cols_[j])
      for (std::size_t i = 0; i < m_; ++i) alpha[i] += binv_[i * m_ + k] * a;
  }

  bool refactor() {
    // Gauss-Jordan inverse of the basis matrix with partial pivoting.
    std::vector<double> b(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i)
      for (const auto& [row, a] : cols_[basis_[i]]) b[row * m_ + i] = a;
    std::vector<double> inv(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) inv[i * m_ + i] = 1.0;
    for (std::size_t c = 0; c < m_; ++c) {
      std::size_t p = c;
      double best = std::fabs(b[c * m_ + c]);
      for (std::size_t r = c + 1; r < m_; ++r)
        if (std::fabs(b[r * m_ + c]) > best) { best = std::fabs(b[r * m_ + c]); p = r; }
      if (best < 1e-13) return false;
      if (p != c)
        for (std::size_t k = 0; k < m_; ++k) {
          std::swap(b[p * m_ + k], b[c * m_ + k]);
          std::swap(inv[p * m_ + k], inv[c * m_ + k]);
        }
      const double piv = b[c * m_ + c];
      for (std::size_t k = 0; k < m_; ++k) {
        b[c * m_ + k] /= piv;
        inv[c * m_ + k] /= piv;
      }
      for (std::size_t r = 0; r < m_; ++r) {
        if (r == c) continue;
        const double f = b[r * m_ + c];
        if (f == 0.0) continue;
        for (std::size_t k = 0; k < m_; ++k) {
          b[r * m_ + k] -= f * b[c * m_ + k];
          inv[r * m_ + k] -= f * inv[c * m_ + k];
        }
      }
    }
    binv_ = std::move(inv);
    recompute_basic_values();
    since_refactor_ = 0;
    return true;
  }

  void recompute_basic_values() {
    std::vector<double> r = rhs_;
    for (std::size_t j = 0; j < n_; ++j) {
      if (state_[j] == Basic || x_[j] == 0.0) continue;
      for (const auto& [i, a] : cols_[j]) r[i] -= a * x_[j];
    }
    for (std::size_t i = 0; i < m_; ++i) {
      double s = 0.0;
      const double* row = &binv_[i * m_];
      for (std::size_t k = 0; k < m_; ++k) s += row[k] * r[k];
      x_[basis_[i]] = s;
    }
  }

  void pivot(std::size_t r, std::size_t q, const std::vector<double>& alpha) {
    const double piv = alpha[r];
    double* prow = &binv_[r * m_];
    for (std::size_t k = 0; k < m_; ++k) prow[k] /= piv;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r || alpha[i] == 0.0) continue;
      const double f = alpha[i];
      double* row = &binv_[i * m_];
      for (std::size_t k = 0; k < m_; ++k) row[k] -= f * prow[k];
    }
    basis_[r] = q;
    state_[q] = Basic;
    ++since_refactor_;
  }

  LpStatus iterate(const std::vector<double>& c, std::size_t max_iter) {
    std::vector<double> pi, alpha;
    std::size_t degenerate_run = 0;
    bool verified = false;
    while (true) {
      if (iterations_ >= max_iter) return LpStatus::IterationLimit;
      if (since_refactor_ >= lim_.refactor_every) refactor();
      compute_duals(c, pi);

      std::size_t q = n_;
      double best = 0.0;
      double dq = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        if (state_[j] == Basic || is_fixed(j)) continue;
        const double d = reduced_cost(c, pi, j);
        double score = 0.0;
        if (state_[j] == NonbasicLower && d < -lim_.optimality_tol) score = -d;
        else if (state_[j] == NonbasicUpper && d > lim_.optimality_tol) score = d;
        else if (state_[j] == NonbasicFree && std::fabs(d) > lim_.optimality_tol) score = std::fabs(d);
        if (score == 0.0) continue;
        if (bland_) { q = j; dq = d; break; }
        if (score > best) { best = score; q = j; dq = d; }
      }
      if (q == n_) {
        // Confirm optimality against a fresh factorization before stopping.
        if (!verified && since_refactor_ > 0) {
          refactor();
          verified = true;
          continue;
        }
        return LpStatus::Optimal;
      }
      verified = false;

      ftran(q, alpha);
      const double dir = dq < 0.0 ? 1.0 : -1.0;
      const double span = ub_[q] - lb_[q];  // inf when either side is unbounded

      // Harris pass 1: largest step that keeps every basic variable within
      // its bounds relaxed by the feasibility tolerance.
      const double htol = lim_.feasibility_tol * 0.1;
      double theta_max = kInf;
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = dir * alpha[i];
        const std::size_t b = basis_[i];
        if (a > lim_.pivot_tol && std::isfinite(lb_[b])) theta_max = std::min(theta_max, (x_[b] - lb_[b] + htol) / a);
        else if (a < -lim_.pivot_tol && std::isfinite(ub_[b])) theta_max = std::min(theta_max, (ub_[b] - x_[b] + htol) / -a);
      }
      if (!std::isfinite(theta_max) && !std::isfinite(span)) return LpStatus::Unbounded;

      // Pass 2: among rows whose exact ratio fits under theta_max, take the
      // largest pivot (Bland: the smallest basic variable index at min ratio).
      std::size_t leave = m_;
      double theta = kInf;
      if (std::isfinite(theta_max)) {
        if (bland_) {
          double min_ratio = kInf;
          for (std::size_t i = 0; i < m_; ++i) {
            const double ratio = exact_ratio(i, dir * alpha[i]);
            if (ratio < min_ratio) min_ratio = ratio;
          }
          for (std::size_t i = 0; i < m_; ++i) {
            const double ratio = exact_ratio(i, dir * alpha[i]);
            if (ratio <= min_ratio + 1e-12 && (leave == m_ || basis_[i] < basis_[leave])) leave = i;
          }
          theta = std::max(min_ratio, 0.0);
        } else {
          double best_piv = 0.0;
          for (std::size_t i = 0; i < m_; ++i) {
            const double ratio = exact_ratio(i, dir * alpha[i]);
            if (ratio <= theta_max && std::fabs(alpha[i]) > best_piv) {
              best_piv = std::fabs(alpha[i]);
              leave = i;
              theta = std::max(ratio, 0.0);
            }
          }
        }
      }
      ++iterations_;

      if (std::isfinite(span) && span <= theta) {
        // Entering variable reaches its opposite bound first: no basis change.
        for (std::size_t i = 0; i < m_; ++i) x_[basis_[i]] -= dir * span * alpha[i];
        if (state_[q] == NonbasicLower) { state_[q] = NonbasicUpper; x_[q] = ub_[q]; }
        else { state_[q] = NonbasicLower; x_[q] = lb_[q]; }
        degenerate_run = span < 1e-12 ? degenerate_run + 1 : 0;
        continue;
      }
      if (leave == m_) return LpStatus::Unbounded;

      for (std::size_t i = 0; i < m_; ++i) x_[basis_[i]] -= dir * theta * alpha[i];
      x_[q] += dir * theta;
      const std::size_t out = basis_[leave];
      if (dir * alpha[leave] > 0.0) { x_[out] = lb_[out]; state_[out] = NonbasicLower; }
      else { x_[out] = ub_[out]; state_[out] = NonbasicUpper; }
      if (is_fixed(out)) state_[out] = NonbasicLower;
      pivot(leave, q, alpha);

      degenerate_run = theta < 1e-12 ? degenerate_run + 1 : 0;
      if (degenerate_run >= lim_.bland_after) bland_ = true;
    }
  }

  double exact_ratio(std::size_t i, double a) const {
    const std::size_t b = basis_[i];
    if (a > lim_.pivot_tol && std::isfinite(lb_[b])) return (x_[b] - lb_[b]) / a;
    if (a < -lim_.pivot_tol && std::isfinite(ub_[b])) return (ub_[b] - x_[b]) / -a;
    return kInf;
  }

  void drive_out_artificials() {
    std::vector<double> alpha;
    for (std::size_t r = 0; r < m_; ++r) {
      if (basis_[r] < first_art_) continue;
      // Row r of B^-1 A_j for every candidate j.
      std::size_t pick = n_;
      double best = 1e-7;
      for (std::size_t j = 0; j < first_art_; ++j) {
        if (state_[j] == Basic) continue;
        double v = 0.0;
        for (const auto& [k, a] : cols_[j]) v += binv_[r * m_ + k] * a;
        if (std::fabs(v) > best) { best = std::fabs(v); pick = j; }
      }
      if (pick == n_) continue;  // redundant row; the artificial stays basic at zero
      ftran(pick, alpha);
      const std::size_t out = basis_[r];
      x_[out] = 0.0;
      state_[out] = NonbasicLower;
      pivot(r, pick, alpha);
    }
    refactor();
  }

  LpSolution& finish(LpSolution& sol, LpStatus st) {
    sol.status = st;
    sol.iterations = iterations_;
    sol.used_bland = bland_;
    if (st != LpStatus::Optimal) return sol;
    if (since_refactor_ > 0) refactor();
    std::vector<double> c(n_, 0.0);
    std::copy(cost_.begin(), cost_.end(), c.begin());
    std::vector<double> pi;
    compute_duals(c, pi);

    sol.primal.assign(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_struct_));
    sol.value = lp_.evaluate(sol.primal);
    const double sgn = lp_.sense == Sense::Minimize ? 1.0 : -1.0;
    sol.eq_duals.resize(m_eq_);
    for (std::size_t i = 0; i < m_eq_; ++i) sol.eq_duals[i] = sgn * pi[i];
    sol.ineq_duals.resize(m_ - m_eq_);
    for (std::size_t i = m_eq_; i < m_; ++i) sol.ineq_duals[i - m_eq_] = std::max(0.0, -pi[i]);
    sol.reduced_costs.resize(n_struct_);
    for (std::size_t j = 0; j < n_struct_; ++j) sol.reduced_costs[j] = reduced_cost(c, pi, j);

    const std::size_t m_in = m_ - m_eq_;
    for (std::size_t i = 0; i < m_in; ++i) {
      const double slack = lp_.ineq_rhs[i] - lp_.ineq_rows[i].dot(sol.primal);
      if (std::fabs(slack) <= lim_.tight_tol) sol.fingerprint.push_back(static_cast<std::int64_t>(i));
    }
    for (std::size_t j = 0; j < n_struct_; ++j) {
      const double y = sol.primal[j];
      if (std::isfinite(lp_.lower[j]) && std::fabs(y - lp_.lower[j]) <= lim_.tight_tol)
        sol.fingerprint.push_back(static_cast<std::int64_t>(m_in + 2 * j));
      if (std::isfinite(lp_.upper[j]) && std::fabs(y - lp_.upper[j]) <= lim_.tight_tol)
        sol.fingerprint.push_back(static_cast<std::int64_t>(m_in + 2 * j + 1));
    }
    return sol;
  }

  const LinearProgram& lp_;
  const LpLimits& lim_;
  std::size_t n_struct_ = 0, n_ = 0, m_ = 0, m_eq_ = 0, first_art_ = 0;
  std::vector<Column> cols_;
  std::vector<double> lb_, ub_, cost_, rhs_, x_;
  std::vector<State> state_;
  std::vector<std::size_t> basis_;
  std::vector<double> binv_;
  std::size_t since_refactor_ = 0;
  std::size_t iterations_ = 0;
  bool bland_ = false;
};

}  // namespace detail

inline LpSolution solve_lp(const LinearProgram& lp, const LpLimits& limits = {}) {
  lp.validate();
  detail::SimplexEngine eng(lp, limits);
  return eng.run();
}

/// Residuals of the optimality conditions of a solution, all in absolute terms.
struct KktResiduals {
  double primal = 0.0;         // max bound/row violation
  double dual_sign = 0.0;      // max wrong-signed reduced cost
  double complementarity = 0.0;
  double duality_gap = 0.0;    // |primal objective - dual objective|
};

/// Independent recomputation of the KKT conditions from the model data and the
/// reported primal/dual vectors (does not reuse the solver's internals).
inline KktResiduals kkt_residuals(const LinearProgram& lp, const LpSolution& sol) {
  KktResiduals r;
  const std::size_t n = lp.num_vars();
  const double sgn = lp.sense == Sense::Minimize ? 1.0 : -1.0;
  const auto& y = sol.primal;
  for (std::size_t j = 0; j < n; ++j) {
    r.primal = std::max(r.primal, lp.lower[j] - y[j]);
    r.primal = std::max(r.primal, y[j] - lp.upper[j]);
  }
  for (std::size_t i = 0; i < lp.eq_rows.size(); ++i)
    r.primal = std::max(r.primal, std::fabs(lp.eq_rows[i].dot(y) - lp.eq_rhs[i]));
  std::vector<double> slack(lp.ineq_rows.size());
  for (std::size_t i = 0; i < lp.ineq_rows.size(); ++i) {
    slack[i] = lp.ineq_rhs[i] - lp.ineq_rows[i].dot(y);
    r.primal = std::max(r.primal, -slack[i]);
    r.complementarity = std::max(r.complementarity, std::fabs(sol.ineq_duals[i] * slack[i]));
    r.dual_sign = std::max(r.dual_sign, -sol.ineq_duals[i]);
  }
  // Minimization form: c_min = sgn c, pi_eq = sgn nu, pi_ineq = -mu.
  std::vector<double> d(n);
  for (std::size_t j = 0; j < n; ++j) d[j] = sgn * lp.objective[j];
  for (std::size_t i = 0; i < lp.eq_rows.size(); ++i) {
    const auto& row = lp.eq_rows[i];
    for (std::size_t k = 0; k < row.index.size(); ++k) d[row.index[k]] -= sgn * sol.eq_duals[i] * row.value[k];
  }
  for (std::size_t i = 0; i < lp.ineq_rows.size(); ++i) {
    const auto& row = lp.ineq_rows[i];
    for (std::size_t k = 0; k < row.index.size(); ++k) d[row.index[k]] += sol.ineq_duals[i] * row.value[k];
  }
  double dual_obj = 0.0;
  for (std::size_t i = 0; i < lp.eq_rows.size(); ++i) dual_obj += sgn * sol.eq_duals[i] * lp.eq_rhs[i];
  for (std::size_t i = 0; i < lp.ineq_rows.size(); ++i) dual_obj -= sol.ineq_duals[i] * lp.ineq_rhs[i];
  for (std::size_t j = 0; j < n; ++j) {
    const bool at_lb = std::isfinite(lp.lower[j]) && std::fabs(y[j] - lp.lower[j]) <= 1e-9;
    const bool at_ub = std::isfinite(lp.upper[j]) && std::fabs(y[j] - lp.upper[j]) <= 1e-9;
    if (at_lb && at_ub) {
      dual_obj += d[j] * lp.lower[j];
    } else if (at_lb) {
      r.dual_sign = std::max(r.dual_sign, -d[j]);
      dual_obj += d[j] * lp.lower[j];
    } else if (at_ub) {
      r.dual_sign = std::max(r.dual_sign, d[j]);
      dual_obj += d[j] * lp.upper[j];
    } else {
      r.dual_sign = std::max(r.dual_sign, std::fabs(d[j]));
      dual_obj += d[j] * y[j];
    }
  }
  r.duality_gap = std::fabs(sgn * sol.value - dual_obj);
  return r;
}

}  // namespace tractnet
