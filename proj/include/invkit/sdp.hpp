#pragma once

// Standard-form conic problems  min c'x  s.t.  A x = b,  x in K,
// where K is a product of dense PSD blocks, a nonnegative orthant and a
// free subspace. Solved by a dense primal-dual interior-point method with
// Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
//
// Free variables are eliminated exactly up front through a QR
// factorization of their columns; the cone part is solved in the reduced
// row space and the free part is recovered by triangular back-solve.
// Symmetric blocks use the scaled lower-triangular vectorization (svec,
// off-diagonals times sqrt(2)), which makes the vectorization self-inverse
// and inner products coordinate-wise.

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <cblas.h>
#include <lapacke.h>

#include "invkit/errors.hpp"

namespace invkit {

enum class BlockType { psd, nonneg, free_var };

struct Block {
  BlockType type;
  int dim;  // psd: matrix side; nonneg/free: number of scalars
};

inline int svec_len(const Block& b) { return b.type == BlockType::psd ? b.dim * (b.dim + 1) / 2 : b.dim; }

inline void svec_to_mat(const double* v, int s, Eigen::MatrixXd& M) {
  static const double inv_rt2 = 1.0 / std::sqrt(2.0);
  M.resize(s, s);
  int k = 0;
  for (int j = 0; j < s; ++j)
    for (int i = j; i < s; ++i, ++k) {
      double val = (i == j) ? v[k] : v[k] * inv_rt2;
      M(i, j) = val;
      M(j, i) = val;
    }
}

inline void mat_to_svec(const Eigen::MatrixXd& M, double* v) {
  static const double rt2 = std::sqrt(2.0);
  const int s = static_cast<int>(M.rows());
  int k = 0;
  for (int j = 0; j < s; ++j)
    for (int i = j; i < s; ++i, ++k) v[k] = (i == j) ? M(i, j) : M(i, j) * rt2;
}

struct ConicProblem {
  std::vector<Block> blocks;
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double> A;  // m x N, N = sum of svec lengths
  Eigen::VectorXd b;

  int total_dim() const {
    int n = 0;
    for (const auto& blk : blocks) n += svec_len(blk);
    return n;
  }
  int rows() const { return static_cast<int>(b.size()); }
};

enum class SolveStatus { optimal, near_optimal, infeasible, unbounded, stall, max_iter };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::near_optimal: return "near";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::stall: return "stall";
    case SolveStatus::max_iter: return "max_iter";
  }
  return "?";
}

struct IterateLog {
  int iter;
  double mu, rel_gap, pinf, dinf, primal_obj, dual_obj, step_p, step_d;
};

struct ConicSolution {
  Eigen::VectorXd x, y, s;
  SolveStatus status = SolveStatus::max_iter;
  double primal_obj = 0.0, dual_obj = 0.0;
  int iterations = 0;
  std::vector<IterateLog> trace;
  std::vector<int> dropped_rows;       // presolve-removed dependent equality rows
  std::vector<int> dropped_free_cols;  // dependent free columns folded to zero
  std::string message;
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 200;
  double rank_tol = 1e-10;  // presolve dependency threshold
  std::ostream* log = nullptr;
};

struct KktReport {
  double primal_res = 0.0;   // ||Ax - b||_inf
  double dual_res = 0.0;     // ||A'y + s - c||_inf
  double rel_gap = 0.0;      // |c'x - b'y| / (1 + |c'x|)
  double min_eig_x = 0.0;    // over PSD blocks of x (0 if none)
  double min_eig_s = 0.0;
  double min_nonneg_x = 0.0; // over nonneg entries (0 if none)
  double min_nonneg_s = 0.0;
};

namespace detail {

struct ConeSlice {
  BlockType type;
  int dim;
  int svlen;
  int col0;       // column offset in the cone-only matrix A_c
  int orig_col0;  // column offset in the original A
};

// Dense QR of the free-variable columns with structural rank handling:
// unpivoted blocked QR, then a rescan for (near-)zero diagonals; dependent
// columns are removed and the factorization repeated. Column order places
// certificate coefficients first, so only redundant multiplier directions
// are ever folded.
struct FreeReduction {
  int m = 0, f = 0;
  Eigen::MatrixXd qr;          // m x f factor (reflectors + R)
  std::vector<double> tau;
  std::vector<int> free_cols;  // kept free columns (original indices)
  std::vector<int> dropped;    // folded free columns (original indices)
  Eigen::MatrixXd Q2T;         // (m - f) x m, null-space basis transposed
  Eigen::VectorXd y0;          // particular solution of A_f' y = c_f

  void apply_q1t(Eigen::VectorXd& v) const {  // v (m) -> Q' v, keep first f
    LAPACKE_dormqr(LAPACK_COL_MAJOR, 'L', 'T', m, 1, f, qr.data(), m, tau.data(), v.data(), m);
  }
};

inline std::vector<ConeSlice> cone_slices(const ConicProblem& p) {
  std::vector<ConeSlice> out;
  int col = 0, ccol = 0;
  for (const auto& blk : p.blocks) {
    int len = svec_len(blk);
    if (blk.type != BlockType::free_var) {
      out.push_back({blk.type, blk.dim, len, ccol, col});
      ccol += len;
    }
    col += len;
  }
  return out;
}

inline std::vector<int> free_columns(const ConicProblem& p) {
  std::vector<int> out;
  int col = 0;
  for (const auto& blk : p.blocks) {
    int len = svec_len(blk);
    if (blk.type == BlockType::free_var)
      for (int j = 0; j < len; ++j) out.push_back(col + j);
    col += len;
  }
  return out;
}

// Interior-point working state for one PSD block.
struct PsdState {
  int dim = 0;
  int svlen = 0;
  int col0 = 0;
  Eigen::MatrixXd X, S;          // current iterates
  Eigen::MatrixXd G;             // NT scaling factor, W = G G'
  Eigen::VectorXd sigma;         // NT spectrum, Xhat = Shat = diag(sigma)
  Eigen::MatrixXd Rdhat;         // G' Rd G
  Eigen::MatrixXd dXhat_aff, dShat_aff;
  Eigen::MatrixXd dX, dS, dX_aff, dS_aff;
};

inline double psd_max_step(const Eigen::VectorXd& sigma, const Eigen::MatrixXd& dHat) {
  const int s = static_cast<int>(sigma.size());
  Eigen::MatrixXd K = dHat;
  for (int j = 0; j < s; ++j)
    for (int i = 0; i < s; ++i) K(i, j) /= std::sqrt(sigma[i] * sigma[j]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
  double lmin = es.eigenvalues().minCoeff();
  if (lmin >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / lmin;
}

}  // namespace detail

class ConicSolver {
 public:
  ConicSolver(const ConicProblem& p, const SolveOptions& opt) : p_(p), opt_(opt) {}

  ConicSolution run() {
    setup();
    if (!msg_.empty()) {  // presolve decided the outcome
      sol_.message = msg_;
      return sol_;
    }
    if (mt_ == 0) {
      solve_unconstrained();
      return sol_;
    }
    iterate();
    return sol_;
  }

 private:
  using MatrixXd = Eigen::MatrixXd;
  using VectorXd = Eigen::VectorXd;

  const ConicProblem& p_;
  SolveOptions opt_;
  ConicSolution sol_;
  std::string msg_;

  std::vector<detail::ConeSlice> slices_;
  Eigen::SparseMatrix<double> Ac_;  // m x Nc, cone columns only
  VectorXd cc_;                     // cone objective
  std::optional<detail::FreeReduction> red_;
  std::vector<int> kept_rows_;  // reduced-row indices kept after row presolve
  int m_ = 0;                   // original row count
  int mr_ = 0;                  // rows after free elimination (m - f)
  int mt_ = 0;                  // rows after row presolve
  int nc_ = 0;                  // cone columns
  double obj_shift_ = 0.0;      // b' y0

  VectorXd bt_, ct_;  // reduced rhs and cone objective
  std::vector<detail::PsdState> psd_;
  std::vector<int> nn_cols_;  // cone-column indices of nonneg scalars
  VectorXd xn_, sn_, dxn_, dsn_, dxn_aff_, dsn_aff_;
  VectorXd y_, dy_;
  double nu_ = 0.0;

  MatrixXd Mschur_;
  MatrixXd slice_buf_, bhat_buf_;

  // ---- setup -----------------------------------------------------------

  void setup() {
    m_ = p_.rows();
    slices_ = detail::cone_slices(p_);
    std::vector<int> fcols = detail::free_columns(p_);
    nc_ = 0;
    for (const auto& s : slices_) nc_ += s.svlen;

    // split A into cone part and free part
    std::vector<int> col_map(p_.total_dim(), -1);
    {
      int cc = 0;
      for (const auto& s : slices_)
        for (int j = 0; j < s.svlen; ++j) col_map[s.orig_col0 + j] = cc++;
    }
    std::vector<Eigen::Triplet<double>> tc;
    for (int k = 0; k < p_.A.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(p_.A, k); it; ++it)
        if (col_map[it.col()] >= 0) tc.emplace_back(it.row(), col_map[it.col()], it.value());
    Ac_.resize(m_, nc_);
    Ac_.setFromTriplets(tc.begin(), tc.end());
    Ac_.makeCompressed();
    cc_.resize(nc_);
    {
      int cc = 0;
      for (const auto& s : slices_)
        for (int j = 0; j < s.svlen; ++j) cc_[cc++] = p_.c[s.orig_col0 + j];
    }

    if (!fcols.empty())
      eliminate_free(fcols);
    else
      mr_ = m_;

    reduce_rows();
    if (!msg_.empty()) return;

    // reduced data
    bt_.resize(mt_);
    if (red_) {
      VectorXd br = red_->Q2T * p_.b;
      for (int i = 0; i < mt_; ++i) bt_[i] = br[kept_rows_[i]];
      ct_ = cc_;
      VectorXd aty = Ac_.transpose() * red_->y0;
      ct_ -= aty;
      obj_shift_ = p_.b.dot(red_->y0);
    } else {
      for (int i = 0; i < mt_; ++i) bt_[i] = p_.b[kept_rows_[i]];
      ct_ = cc_;
      obj_shift_ = 0.0;
    }

    // cone iterate state
    for (const auto& s : slices_) {
      if (s.type == BlockType::psd) {
        detail::PsdState st;
        st.dim = s.dim;
        st.svlen = s.svlen;
        st.col0 = s.col0;
        psd_.push_back(std::move(st));
        nu_ += s.dim;
      } else {
        for (int j = 0; j < s.svlen; ++j) nn_cols_.push_back(s.col0 + j);
        nu_ += s.svlen;
      }
    }
  }

  void eliminate_free(std::vector<int> fcols) {
    detail::FreeReduction red;
    red.m = m_;
    std::vector<int> cols = fcols;
    // QR, dropping structurally dependent columns until full column rank
    for (int pass = 0; pass < 8; ++pass) {
      int f = static_cast<int>(cols.size());
      if (f > m_) {  // rank cannot exceed m: defer trailing columns
        for (int j = m_; j < f; ++j) red.dropped.push_back(cols[j]);
        cols.resize(m_);
        f = m_;
      }
      red.qr.resize(m_, f);
      red.qr.setZero();
      for (std::size_t j = 0; j < cols.size(); ++j)
        for (Eigen::SparseMatrix<double>::InnerIterator it(p_.A, cols[j]); it; ++it)
          red.qr(it.row(), j) = it.value();
      red.tau.assign(std::max(1, f), 0.0);
      if (f > 0) LAPACKE_dgeqrf(LAPACK_COL_MAJOR, m_, f, red.qr.data(), m_, red.tau.data());
      double rmax = 0.0;
      for (int j = 0; j < f; ++j) rmax = std::max(rmax, std::abs(red.qr(j, j)));
      std::vector<int> keep, drop;
      for (int j = 0; j < f; ++j) {
        if (std::abs(red.qr(j, j)) <= opt_.rank_tol * std::max(1.0, rmax))
          drop.push_back(j);
        else
          keep.push_back(j);
      }
      if (drop.empty()) {
        red.f = f;
        red.free_cols = cols;
        break;
      }
      std::vector<int> next;
      for (int j : keep) next.push_back(cols[j]);
      for (int j : drop) red.dropped.push_back(cols[j]);
      // retry previously deferred columns once space frees up
      cols = next;
      if (static_cast<int>(cols.size()) == f) break;
    }
    const int f = red.f;
    mr_ = m_ - f;

    // explicit null-space basis: Q2 = Q * [0; I]
    MatrixXd E = MatrixXd::Zero(m_, mr_);
    for (int j = 0; j < mr_; ++j) E(f + j, j) = 1.0;
    if (f > 0)
      LAPACKE_dormqr(LAPACK_COL_MAJOR, 'L', 'N', m_, mr_, f, red.qr.data(), m_, red.tau.data(), E.data(), m_);
    red.Q2T = E.transpose();

    // particular dual point: y0 = Q1 R^{-T} c_f
    VectorXd z = VectorXd::Zero(m_);
    for (int j = 0; j < f; ++j) z[j] = p_.c[red.free_cols[j]];
    if (f > 0) {
      LAPACKE_dtrtrs(LAPACK_COL_MAJOR, 'U', 'T', 'N', f, 1, red.qr.data(), m_, z.data(), m_);
      LAPACKE_dormqr(LAPACK_COL_MAJOR, 'L', 'N', m_, 1, f, red.qr.data(), m_, red.tau.data(), z.data(), m_);
      red.y0 = z;
    } else {
      red.y0 = VectorXd::Zero(m_);
    }
    sol_.dropped_free_cols = red.dropped;
    red_ = std::move(red);
  }

  // Row presolve on the reduced system: pivoted Cholesky of the row Gram
  // matrix detects dependent equality rows (coefficient matching over
  // ideals produces them); inconsistent dependencies are an error.
  void reduce_rows() {
    MatrixXd Gr = MatrixXd::Zero(mr_, mr_);
    // accumulate G = At * At' block by block through the slice streamer
    MatrixXd buf;
    for (const auto& s : slices_) {
      fill_slice(s, buf);
      cblas_dsyrk(CblasColMajor, CblasLower, CblasNoTrans, mr_, s.svlen, 1.0, buf.data(), mr_, 1.0, Gr.data(), mr_);
    }
    VectorXd bred = red_ ? VectorXd(red_->Q2T * p_.b) : p_.b;

    MatrixXd Gc = Gr;
    std::vector<lapack_int> piv(std::max(1, mr_));
    lapack_int rank = 0;
    double scale = std::max(1.0, Gr.diagonal().maxCoeff());
    LAPACKE_dpstrf(LAPACK_COL_MAJOR, 'L', mr_, Gc.data(), mr_, piv.data(), &rank, opt_.rank_tol * opt_.rank_tol * scale);
    kept_rows_.clear();
    std::vector<int> dropped;
    for (int i = 0; i < rank; ++i) kept_rows_.push_back(piv[i] - 1);
    for (int i = rank; i < mr_; ++i) dropped.push_back(piv[i] - 1);
    std::sort(kept_rows_.begin(), kept_rows_.end());
    mt_ = static_cast<int>(kept_rows_.size());

    if (!dropped.empty()) {
      // consistency: each dropped row must be the same combination of kept
      // rows in b as it is in A
      Eigen::LLT<MatrixXd> llt;
      MatrixXd Gkk(mt_, mt_);
      for (int i = 0; i < mt_; ++i)
        for (int j = 0; j < mt_; ++j) Gkk(i, j) = Gr(std::max(kept_rows_[i], kept_rows_[j]), std::min(kept_rows_[i], kept_rows_[j]));
      Gkk.diagonal().array() += 1e-12 * scale;
      llt.compute(Gkk);
      for (int d : dropped) {
        VectorXd g(mt_);
        for (int i = 0; i < mt_; ++i) g[i] = Gr(std::max(kept_rows_[i], d), std::min(kept_rows_[i], d));
        VectorXd lam = llt.solve(g);
        double bk = 0.0;
        for (int i = 0; i < mt_; ++i) bk += lam[i] * bred[kept_rows_[i]];
        if (std::abs(bk - bred[d]) > 1e-7 * (1.0 + bred.cwiseAbs().maxCoeff())) {
          std::string rows;
          for (int r : dropped) rows += std::to_string(r) + " ";
          throw PresolveError("presolve: dependent rows inconsistent with b; dependent reduced rows: " + rows);
        }
      }
      sol_.dropped_rows = dropped;
    }
  }

  // Stream one cone block of the reduced constraint matrix into `out`
  // (mt x svlen). With a free reduction this is Q2' * A_c[:, block]
  // restricted to kept rows; otherwise a densified sparse slice.
  void fill_slice(const detail::ConeSlice& s, MatrixXd& out) {
    const bool rowsel = !kept_rows_.empty() && mt_ != mr_;
    const int rows = kept_rows_.empty() ? mr_ : mt_;
    out.setZero(rows, s.svlen);
    if (red_) {
      const MatrixXd& Q2T = red_->Q2T;
      for (int j = 0; j < s.svlen; ++j)
        for (Eigen::SparseMatrix<double>::InnerIterator it(Ac_, s.col0 + j); it; ++it) {
          if (!rowsel)
            out.col(j).noalias() += it.value() * Q2T.col(it.row());
          else
            for (int i = 0; i < rows; ++i) out(i, j) += it.value() * Q2T(kept_rows_[i], it.row());
        }
    } else {
      for (int j = 0; j < s.svlen; ++j)
        for (Eigen::SparseMatrix<double>::InnerIterator it(Ac_, s.col0 + j); it; ++it) {
          int r = it.row();
          if (rowsel || mt_ != mr_) {
            auto pos = std::lower_bound(kept_rows_.begin(), kept_rows_.end(), r);
            if (pos == kept_rows_.end() || *pos != r) continue;
            out(static_cast<int>(pos - kept_rows_.begin()), j) = it.value();
          } else {
            out(r, j) = it.value();
          }
        }
    }
  }

  // y-space vector -> cone-column vector (A~' y), through the reduction.
  VectorXd at_mul(const VectorXd& yt) const {
    VectorXd ym;
    if (red_) {
      VectorXd yfull = VectorXd::Zero(mr_);
      for (int i = 0; i < mt_; ++i) yfull[kept_rows_[i]] = yt[i];
      ym = red_->Q2T.transpose() * yfull;
    } else {
      ym = VectorXd::Zero(m_);
      for (int i = 0; i < mt_; ++i) ym[kept_rows_[i]] = yt[i];
    }
    return Ac_.transpose() * ym;
  }

  // cone-column vector -> y-space (A~ v).
  VectorXd a_mul(const VectorXd& v) const {
    VectorXd av = Ac_ * v;
    VectorXd out(mt_);
    if (red_) {
      VectorXd r = red_->Q2T * av;
      for (int i = 0; i < mt_; ++i) out[i] = r[kept_rows_[i]];
    } else {
      for (int i = 0; i < mt_; ++i) out[i] = av[kept_rows_[i]];
    }
    return out;
  }

  // ---- degenerate cases -------------------------------------------------

  void solve_unconstrained() {
    // No equality rows remain: x = 0 is optimal iff c is in the dual cone.
    VectorXd x = VectorXd::Zero(nc_);
    bool dual_ok = true;
    for (const auto& s : slices_) {
      if (s.type == BlockType::psd) {
        MatrixXd C;
        detail::svec_to_mat(ct_.data() + s.col0, s.dim, C);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(C, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-12) dual_ok = false;
      } else {
        for (int j = 0; j < s.svlen; ++j)
          if (ct_[s.col0 + j] < -1e-12) dual_ok = false;
      }
    }
    sol_.status = dual_ok ? SolveStatus::optimal : SolveStatus::unbounded;
    finalize(x, VectorXd::Zero(mt_));
  }

  // ---- main loop ---------------------------------------------------------

  void initialize_point() {
    double bnorm = bt_.size() ? bt_.cwiseAbs().maxCoeff() : 0.0;
    double cnorm = ct_.size() ? ct_.cwiseAbs().maxCoeff() : 0.0;
    double xi = std::max({10.0, std::sqrt(double(std::max<std::size_t>(1, nu_))), bnorm});
    double eta = std::max({10.0, std::sqrt(double(std::max<std::size_t>(1, nu_))), cnorm});
    for (auto& st : psd_) {
      st.X = xi * MatrixXd::Identity(st.dim, st.dim);
      st.S = eta * MatrixXd::Identity(st.dim, st.dim);
    }
    xn_ = VectorXd::Constant(nn_cols_.size(), xi);
    sn_ = VectorXd::Constant(nn_cols_.size(), eta);
    y_ = VectorXd::Zero(mt_);
  }

  VectorXd cone_x() const {
    VectorXd x(nc_);
    for (const auto& st : psd_) detail::mat_to_svec(st.X, x.data() + st.col0);
    for (std::size_t j = 0; j < nn_cols_.size(); ++j) x[nn_cols_[j]] = xn_[j];
    return x;
  }
  VectorXd cone_s() const {
    VectorXd s(nc_);
    for (const auto& st : psd_) detail::mat_to_svec(st.S, s.data() + st.col0);
    for (std::size_t j = 0; j < nn_cols_.size(); ++j) s[nn_cols_[j]] = sn_[j];
    return s;
  }

  void iterate() {
    initialize_point();
    double best_metric = std::numeric_limits<double>::infinity();
    int no_progress = 0;
    VectorXd best_x, best_y, best_s;
    int it = 0;
    for (; it < opt_.max_iter; ++it) {
      VectorXd x = cone_x(), s = cone_s();
      double gap = x.dot(s);
      double mu = gap / double(nu_);
      VectorXd rp = bt_ - a_mul(x);
      VectorXd aty = at_mul(y_);
      VectorXd rd = ct_ - aty - s;

      double pobj = ct_.dot(x) + obj_shift_;
      double dobj = bt_.dot(y_) + obj_shift_;
      double pinf = rp.size() ? rp.norm() / (1.0 + bt_.norm()) : 0.0;
      double dinf = rd.norm() / (1.0 + ct_.norm());
      double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
      double metric = std::max({pinf, dinf, relgap});

      sol_.trace.push_back({it, mu, relgap, pinf, dinf, pobj, dobj, 0.0, 0.0});
      if (opt_.log)
        (*opt_.log) << "iter " << it << " mu " << mu << " gap " << relgap << " pinf " << pinf << " dinf " << dinf
                    << " pobj " << pobj << "\n";

      if (metric <= std::max(opt_.tol, 1e-14) && relgap <= std::max(opt_.tol, 1e-14)) {
        sol_.status = metric <= std::max(1e-8, std::min(opt_.tol, 1e-8)) ? SolveStatus::optimal : SolveStatus::near_optimal;
        finalize(x, y_);
        sol_.iterations = it;
        return;
      }
      if (metric < 0.95 * best_metric) {
        best_metric = metric;
        no_progress = 0;
        best_x = x;
        best_y = y_;
      } else if (++no_progress >= 20) {
        sol_.status = classify_failure(pinf, dinf, mu, pobj, dobj);
        finalize(best_x.size() ? best_x : x, best_y.size() ? best_y : y_);
        sol_.iterations = it;
        sol_.message = "stalled";
        return;
      }
      if (mu < 1e-30) break;

      // NT scalings
      for (auto& st : psd_) nt_scale(st);
      VectorXd gn(nn_cols_.size()), sign(nn_cols_.size());
      for (std::size_t j = 0; j < nn_cols_.size(); ++j) {
        gn[j] = std::sqrt(xn_[j] / sn_[j]);
        sign[j] = std::sqrt(xn_[j] * sn_[j]);
      }

      form_schur(gn);
      if (!factor_schur()) {
        sol_.status = classify_failure(pinf, dinf, mu, pobj, dobj);
        finalize(best_x.size() ? best_x : x, best_y.size() ? best_y : y_);
        sol_.iterations = it;
        sol_.message = "schur factorization failed";
        return;
      }

      // scaled dual residuals
      for (auto& st : psd_) {
        MatrixXd Rd;
        detail::svec_to_mat(rd.data() + st.col0, st.dim, Rd);
        st.Rdhat.noalias() = st.G.transpose() * Rd * st.G;
      }
      VectorXd rdn(nn_cols_.size());
      for (std::size_t j = 0; j < nn_cols_.size(); ++j) rdn[j] = rd[nn_cols_[j]];

      // predictor: Rc = -Xhat Shat
      auto solve_direction = [&](double sigma_mu, bool corrector) {
        VectorXd acc = VectorXd::Zero(nc_);
        for (auto& st : psd_) {
          MatrixXd Rc = -st.sigma.asDiagonal();
          Rc.diagonal() = Rc.diagonal().cwiseProduct(st.sigma);  // -sigma^2
          if (sigma_mu > 0.0) Rc.diagonal().array() += sigma_mu;
          if (corrector) Rc -= 0.5 * (st.dXhat_aff * st.dShat_aff + st.dShat_aff * st.dXhat_aff);
          // Z = Rc o invE - Rdhat ; accumulate q through G Z G'
          MatrixXd Z(st.dim, st.dim);
          for (int jj = 0; jj < st.dim; ++jj)
            for (int ii = 0; ii < st.dim; ++ii)
              Z(ii, jj) = Rc(ii, jj) * 2.0 / (st.sigma[ii] + st.sigma[jj]) - st.Rdhat(ii, jj);
          st.dXhat_aff = Z;  // stash Z for back-substitution reuse
          MatrixXd Y = st.G * Z * st.G.transpose();
          mat_to_svec(Y, acc.data() + st.col0);
        }
        for (std::size_t j = 0; j < nn_cols_.size(); ++j) {
          double rc = -xn_[j] * sn_[j] + sigma_mu;
          if (corrector) rc -= dxn_aff_[j] * dsn_aff_[j];
          double z = rc / sn_[j] - gn[j] * gn[j] * rdn[j];
          acc[nn_cols_[j]] = z;
        }
        VectorXd rhs = rp - a_mul(acc);
        dy_ = rhs;
        solve_schur(dy_);
        // back-substitute
        VectorXd atdy = at_mul(dy_);
        for (auto& st : psd_) {
          MatrixXd dSm;
          detail::svec_to_mat(rd.data() + st.col0, st.dim, dSm);
          MatrixXd Atdy;
          detail::svec_to_mat(atdy.data() + st.col0, st.dim, Atdy);
          dSm -= Atdy;  // dS = Rd - A'dy
          st.dS = dSm;
          MatrixXd dShat = st.G.transpose() * dSm * st.G;
          // dXhat = (Rc o invE) - dShat ; note stash dXhat_aff currently holds
          // Z = Rc o invE - Rdhat, so dXhat = Z + Rdhat - dShat
          MatrixXd dXhat = st.dXhat_aff + st.Rdhat - dShat;
          st.dX.noalias() = st.G * dXhat * st.G.transpose();
          st.dXhat_aff = dXhat;  // now holds the actual scaled direction
          st.dShat_aff = dShat;
        }
        for (std::size_t j = 0; j < nn_cols_.size(); ++j) {
          double rc = -xn_[j] * sn_[j] + sigma_mu;
          if (corrector) rc -= dxn_aff_[j] * dsn_aff_[j];
          dsn_[j] = rdn[j] - atdy[nn_cols_[j]];
          dxn_[j] = rc / sn_[j] - xn_[j] / sn_[j] * dsn_[j];
        }
      };

      // affine predictor
      dxn_aff_.setZero(nn_cols_.size());
      dsn_aff_.setZero(nn_cols_.size());
      solve_direction(0.0, false);
      double ap = 1.0, ad = 1.0;
      for (auto& st : psd_) {
        ap = std::min(ap, 0.99 * detail::psd_max_step(st.sigma, st.dXhat_aff));
        ad = std::min(ad, 0.99 * detail::psd_max_step(st.sigma, st.dShat_aff));
      }
      for (std::size_t j = 0; j < nn_cols_.size(); ++j) {
        if (dxn_[j] < 0) ap = std::min(ap, -0.99 * xn_[j] / dxn_[j]);
        if (dsn_[j] < 0) ad = std::min(ad, -0.99 * sn_[j] / dsn_[j]);
      }
      ap = std::min(ap, 1.0);
      ad = std::min(ad, 1.0);

      double gap_aff = 0.0;
      for (auto& st : psd_) gap_aff += (st.X + ap * st.dX).cwiseProduct(st.S + ad * st.dS).sum();
      for (std::size_t j = 0; j < nn_cols_.size(); ++j) gap_aff += (xn_[j] + ap * dxn_[j]) * (sn_[j] + ad * dsn_[j]);
      gap_aff = std::max(gap_aff, 0.0);
      double sigma = std::pow(gap_aff / gap, 3.0);
      sigma = std::min(1.0, std::max(sigma, 1e-10));

      // stash affine scaled directions for the corrector
      for (auto& st : psd_) {
        st.dX_aff = st.dXhat_aff;
        st.dS_aff = st.dShat_aff;
      }
      dxn_aff_ = dxn_;
      dsn_aff_ = dsn_;
      // corrector needs the *scaled* affine directions in dXhat_aff/dShat_aff
      for (auto& st : psd_) {
        st.dXhat_aff = st.dX_aff;
        st.dShat_aff = st.dS_aff;
      }
      // scale nonneg affine directions: hat(dx) = dx/g, hat(ds) = g*ds
      for (std::size_t j = 0; j < nn_cols_.size(); ++j) {
        dxn_aff_[j] = dxn_aff_[j] / gn[j];
        dsn_aff_[j] = dsn_aff_[j] * gn[j];
      }

      solve_direction(sigma * mu, true);

      ap = 1.0;
      ad = 1.0;
      for (auto& st : psd_) {
        ap = std::min(ap, 0.99 * detail::psd_max_step(st.sigma, st.dXhat_aff));
        ad = std::min(ad, 0.99 * detail::psd_max_step(st.sigma, st.dShat_aff));
      }
      for (std::size_t j = 0; j < nn_cols_.size(); ++j) {
        if (dxn_[j] < 0) ap = std::min(ap, -0.99 * xn_[j] / dxn_[j]);
        if (dsn_[j] < 0) ad = std::min(ad, -0.99 * sn_[j] / dsn_[j]);
      }
      ap = std::min(ap, 1.0);
      ad = std::min(ad, 1.0);

      for (auto& st : psd_) {
        st.X += ap * st.dX;
        st.S += ad * st.dS;
        // symmetrize against drift
        st.X = 0.5 * (st.X + st.X.transpose()).eval();
        st.S = 0.5 * (st.S + st.S.transpose()).eval();
      }
      xn_ += ap * dxn_;
      sn_ += ad * dsn_;
      y_ += ad * dy_;
      sol_.trace.back().step_p = ap;
      sol_.trace.back().step_d = ad;
    }
    sol_.status = SolveStatus::max_iter;
    sol_.iterations = it;
    finalize(cone_x(), y_);
  }

  SolveStatus classify_failure(double pinf, double dinf, double mu, double pobj, double dobj) const {
    if (mu < 1e-10 && pinf > 1e3 * std::max(1e-9, dinf)) return SolveStatus::infeasible;
    if (dobj > 1e9 && dinf < 1e-7) return SolveStatus::infeasible;  // dual ray
    if (pobj < -1e9 && pinf < 1e-7) return SolveStatus::unbounded;
    return SolveStatus::stall;
  }

  void nt_scale(detail::PsdState& st) {
    Eigen::LLT<MatrixXd> cx(st.X), cs(st.S);
    MatrixXd Lx = cx.matrixL(), Ls = cs.matrixL();
    Eigen::BDCSVD<MatrixXd> svd(Ls.transpose() * Lx, Eigen::ComputeThinU | Eigen::ComputeThinV);
    st.sigma = svd.singularValues();
    MatrixXd V = svd.matrixV();
    st.G.noalias() = Lx * V;
    for (int j = 0; j < st.dim; ++j) st.G.col(j) /= std::sqrt(st.sigma[j]);
  }

  void form_schur(const VectorXd& gn) {
    Mschur_.setZero(mt_, mt_);
    MatrixXd T(0, 0), U(0, 0);
    for (auto& st : psd_) {
      detail::ConeSlice s{BlockType::psd, st.dim, st.svlen, st.col0, 0};
      fill_slice(s, slice_buf_);
      bhat_buf_.resize(mt_, st.svlen);
      T.resize(st.dim, st.dim);
      U.resize(st.dim, st.dim);
      for (int i = 0; i < mt_; ++i) {
        Eigen::VectorXd row = slice_buf_.row(i);
        detail::svec_to_mat(row.data(), st.dim, T);
        U.noalias() = st.G.transpose() * T * st.G;
        Eigen::VectorXd sv(st.svlen);
        detail::mat_to_svec(U, sv.data());
        bhat_buf_.row(i) = sv;
      }
      cblas_dsyrk(CblasColMajor, CblasLower, CblasNoTrans, mt_, st.svlen, 1.0, bhat_buf_.data(), mt_, 1.0,
                  Mschur_.data(), mt_);
    }
    if (!nn_cols_.empty()) {
      MatrixXd An(mt_, nn_cols_.size());
      for (std::size_t j = 0; j < nn_cols_.size(); ++j) {
        VectorXd e = VectorXd::Zero(nc_);
        e[nn_cols_[j]] = 1.0;
        An.col(j) = a_mul(e) * gn[j];
      }
      Mschur_ += An * An.transpose();
    }
  }

  bool factor_schur() {
    for (int attempt = 0; attempt < 4; ++attempt) {
      schur_fac_ = Mschur_;
      double jitter = attempt == 0 ? 0.0 : std::pow(10.0, attempt - 14) * std::max(1.0, Mschur_.diagonal().maxCoeff());
      if (jitter > 0.0) schur_fac_.diagonal().array() += jitter;
      if (LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L', mt_, schur_fac_.data(), mt_, {}) == 0) return true;
    }
    return false;
  }

  void solve_schur(VectorXd& rhs) const {
    VectorXd r0 = rhs;
    LAPACKE_dpotrs(LAPACK_COL_MAJOR, 'L', mt_, 1, schur_fac_.data(), mt_, rhs.data(), mt_);
    // one step of iterative refinement
    VectorXd res = r0 - Mschur_.selfadjointView<Eigen::Lower>() * rhs;
    LAPACKE_dpotrs(LAPACK_COL_MAJOR, 'L', mt_, 1, schur_fac_.data(), mt_, res.data(), mt_);
    rhs += res;
  }

  // Map the reduced solution back to the original variable order, recover
  // eliminated free variables and re-inflate dropped rows.
  void finalize(const VectorXd& xc, const VectorXd& yt) {
    VectorXd x = VectorXd::Zero(p_.total_dim());
    for (const auto& s : slices_)
      for (int j = 0; j < s.svlen; ++j) x[s.orig_col0 + j] = xc[s.col0 + j];

    VectorXd y;
    if (red_) {
      VectorXd yfull = VectorXd::Zero(mr_);
      for (int i = 0; i < mt_; ++i) yfull[kept_rows_[i]] = yt[i];
      y = red_->Q2T.transpose() * yfull + red_->y0;
    } else {
      y = VectorXd::Zero(m_);
      for (int i = 0; i < mt_; ++i) y[kept_rows_[i]] = yt[i];
    }

    if (red_ && red_->f > 0) {
      // x_f = R^{-1} Q1' (b - A_c x_c), two refinement sweeps
      VectorXd xf = VectorXd::Zero(red_->f);
      VectorXd resid = p_.b - Ac_ * xc;
      for (int sweep = 0; sweep < 3; ++sweep) {
        VectorXd v = resid;
        red_->apply_q1t(v);
        VectorXd d = v.head(red_->f);
        LAPACKE_dtrtrs(LAPACK_COL_MAJOR, 'U', 'N', 'N', red_->f, 1, red_->qr.data(), m_, d.data(), red_->f);
        xf += d;
        // recompute residual with sparse original free columns
        resid = p_.b - Ac_ * xc;
        for (int j = 0; j < red_->f; ++j)
          for (Eigen::SparseMatrix<double>::InnerIterator it(p_.A, red_->free_cols[j]); it; ++it)
            resid[it.row()] -= it.value() * xf[j];
      }
      for (int j = 0; j < red_->f; ++j) x[red_->free_cols[j]] = xf[j];
    }

    sol_.x = x;
    sol_.y = y;
    sol_.s = p_.c - p_.A.transpose() * y;
    sol_.primal_obj = p_.c.dot(x);
    sol_.dual_obj = p_.b.dot(y);
  }

  MatrixXd schur_fac_;
};

inline ConicSolution solve(const ConicProblem& p, const SolveOptions& opt) {
  ConicSolver solver(p, opt);
  return solver.run();
}

inline ConicSolution solve(const ConicProblem& p, double tol = 1e-8) {
  SolveOptions opt;
  opt.tol = tol;
  return solve(p, opt);
}

inline KktReport check_kkt(const ConicProblem& p, const ConicSolution& sol) {
  KktReport r;
  Eigen::VectorXd pres = p.A * sol.x - p.b;
  r.primal_res = pres.size() ? pres.cwiseAbs().maxCoeff() : 0.0;
  Eigen::VectorXd dres = p.A.transpose() * sol.y + sol.s - p.c;
  r.dual_res = dres.size() ? dres.cwiseAbs().maxCoeff() : 0.0;
  double px = p.c.dot(sol.x), dy = p.b.dot(sol.y);
  r.rel_gap = std::abs(px - dy) / (1.0 + std::abs(px));
  r.min_eig_x = r.min_eig_s = 0.0;
  r.min_nonneg_x = r.min_nonneg_s = 0.0;
  bool first_psd = true, first_nn = true;
  int col = 0;
  for (const auto& blk : p.blocks) {
    int len = svec_len(blk);
    if (blk.type == BlockType::psd) {
      Eigen::MatrixXd X, S;
      svec_to_mat(sol.x.data() + col, blk.dim, X);
      svec_to_mat(sol.s.data() + col, blk.dim, S);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ex(X, Eigen::EigenvaluesOnly), es(S, Eigen::EigenvaluesOnly);
      double mx = ex.eigenvalues().minCoeff(), ms = es.eigenvalues().minCoeff();
      r.min_eig_x = first_psd ? mx : std::min(r.min_eig_x, mx);
      r.min_eig_s = first_psd ? ms : std::min(r.min_eig_s, ms);
      first_psd = false;
    } else if (blk.type == BlockType::nonneg) {
      for (int j = 0; j < len; ++j) {
        double vx = sol.x[col + j], vs = sol.s[col + j];
        r.min_nonneg_x = first_nn ? vx : std::min(r.min_nonneg_x, vx);
        r.min_nonneg_s = first_nn ? vs : std::min(r.min_nonneg_s, vs);
        first_nn = false;
      }
    }
    col += len;
  }
  return r;
}

// SDPA sparse export. Conventions: constraints are the rows of A with
// right-hand side b as the SDPA objective vector, F_i = mat(A_i),
// F_0 = -mat(c). Nonnegative blocks become negative (diagonal) dimensions.
// The format has no free variables, so free columns are written as
// differences of paired nonnegative diagonal entries in one trailing block.
inline void export_sdpa(const ConicProblem& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_sdpa: cannot open " + path);
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };

  std::vector<int> fcols = detail::free_columns(p);
  int nfree = static_cast<int>(fcols.size());
  std::vector<Block> out_blocks;
  std::vector<int> blk_of_col(p.total_dim(), -1), pos_of_col(p.total_dim(), -1);
  {
    int col = 0, bi = 0;
    for (const auto& blk : p.blocks) {
      int len = svec_len(blk);
      if (blk.type != BlockType::free_var) {
        out_blocks.push_back(blk);
        for (int j = 0; j < len; ++j) {
          blk_of_col[col + j] = bi;
          pos_of_col[col + j] = j;
        }
        ++bi;
      }
      col += len;
    }
    if (nfree > 0) {
      out_blocks.push_back({BlockType::nonneg, 2 * nfree});
      for (int j = 0; j < nfree; ++j) {
        blk_of_col[fcols[j]] = bi;
        pos_of_col[fcols[j]] = 2 * j;
      }
    }
  }

  out << p.rows() << "\n";
  out << out_blocks.size() << "\n";
  for (std::size_t i = 0; i < out_blocks.size(); ++i)
    out << (out_blocks[i].type == BlockType::psd ? out_blocks[i].dim : -out_blocks[i].dim)
        << (i + 1 < out_blocks.size() ? " " : "\n");
  for (int i = 0; i < p.rows(); ++i) out << fmt(p.b[i]) << (i + 1 < p.rows() ? " " : "");
  out << "\n";

  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  // entry emitter: matno 0 carries -c, matno i carries row i of A
  auto emit = [&](int matno, int col, double sv) {
    int bi = blk_of_col[col], pos = pos_of_col[col];
    const Block& blk = out_blocks[bi];
    if (blk.type == BlockType::psd) {
      // invert svec position -> (i, j) lower pair
      int s = blk.dim, j = 0, rem = pos;
      while (rem >= s - j) rem -= s - j, ++j;
      int i = j + rem;
      double val = (i == j) ? sv : sv * inv_rt2;
      out << matno << " " << bi + 1 << " " << j + 1 << " " << i + 1 << " " << fmt(val) << "\n";
    } else if (pos_of_col[col] >= 0 && blk_of_col[col] == static_cast<int>(out_blocks.size()) - 1 && nfree > 0 &&
               blk.type == BlockType::nonneg && blk.dim == 2 * nfree &&
               std::find(fcols.begin(), fcols.end(), col) != fcols.end()) {
      out << matno << " " << bi + 1 << " " << pos + 1 << " " << pos + 1 << " " << fmt(sv) << "\n";
      out << matno << " " << bi + 1 << " " << pos + 2 << " " << pos + 2 << " " << fmt(-sv) << "\n";
    } else {
      out << matno << " " << bi + 1 << " " << pos + 1 << " " << pos + 1 << " " << fmt(sv) << "\n";
    }
  };

  for (int col = 0; col < p.total_dim(); ++col)
    if (p.c[col] != 0.0) emit(0, col, -p.c[col]);
  // A by rows: iterate columns, buffer by row for ordered output
  std::vector<std::vector<std::pair<int, double>>> rows(p.rows());
  for (int k = 0; k < p.A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(p.A, k); it; ++it)
      rows[it.row()].emplace_back(static_cast<int>(it.col()), it.value());
  for (int i = 0; i < p.rows(); ++i) {
    std::sort(rows[i].begin(), rows[i].end());
    for (auto& [col, v] : rows[i]) emit(i + 1, col, v);
  }
}

}  // namespace invkit
