#include "rfmpc/prediction.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "rfmpc/kernels.hpp"

namespace rfmpc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kNx = 5;  // augmented state block size
constexpr std::size_t kNy = 4;  // error outputs per step

bool is_zero(const Mat& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0) return false;
  return true;
}
}  // namespace

void HorizonConfig::validate() const {
  if (n < 1 || nc < 1 || nc > n)
    throw std::invalid_argument("HorizonConfig: need 1 <= nc <= n");
  if (!(ts > 0.0)) throw std::invalid_argument("HorizonConfig: ts must be > 0");
}

void QpWeights::validate() const {
  for (double v : q1)
    if (!(v >= 0.0)) throw std::invalid_argument("QpWeights: q1 entries must be >= 0");
  if (!(q2 > 0.0) || !(lambda > 0.0))
    throw std::invalid_argument("QpWeights: q2 and lambda must be > 0");
}

void Bounds::validate() const {
  if (du_lo > du_hi || u_lo > u_hi)
    throw std::invalid_argument("Bounds: lower limit above upper limit");
  for (int q = 0; q < 4; ++q)
    if (eta_lo[q] > eta_hi[q])
      throw std::invalid_argument("Bounds: state lower limit above upper limit");
}

EvolutionMatrices build_nominal(const LtvMatrices& ltv, const HorizonConfig& hcfg) {
  return build_nominal(ltv, hcfg,
                       std::vector<Vec>(static_cast<std::size_t>(hcfg.n), ltv.dd));
}

EvolutionMatrices build_nominal(const LtvMatrices& ltv, const HorizonConfig& hcfg,
                                const std::vector<Vec>& dd_rows) {
  hcfg.validate();
  const std::size_t n = static_cast<std::size_t>(hcfg.n);
  const std::size_t nc = static_cast<std::size_t>(hcfg.nc);
  if (dd_rows.size() != n)
    throw std::invalid_argument("build_nominal: need one disturbance vector per row");

  EvolutionMatrices ev;
  ev.psi = Mat(kNx * n, kNx);
  ev.phi = Mat(kNx * n, nc);
  ev.gamma = Vec(kNx * n, 0.0);
  ev.c = Mat(kNy * n, kNx * n);

  // Row block j (1-based): Psi_j = Ad^j, gamma_j = Ad gamma_{j-1} + dd_j,
  // Phi block (j,i) = Ad^(j-i) Bd for i <= min(j, Nc).
  for (std::size_t j = 0; j < n; ++j) {
    double* psi_blk = ev.psi.row(kNx * j);
    if (j == 0) {
      for (std::size_t r = 0; r < kNx; ++r)
        for (std::size_t cidx = 0; cidx < kNx; ++cidx)
          ev.psi(r, cidx) = ltv.ad(r, cidx);
    } else {
      const double* prev = ev.psi.row(kNx * (j - 1));
      kernels::gemm(ltv.ad.data(), prev, psi_blk, kNx, kNx, kNx);
    }

    Vec prev_gamma(kNx, 0.0);
    if (j > 0)
      for (std::size_t r = 0; r < kNx; ++r) prev_gamma[r] = ev.gamma[kNx * (j - 1) + r];
    Vec g = matvec(ltv.ad, prev_gamma);
    if (j == 0) g.assign(kNx, 0.0);
    for (std::size_t r = 0; r < kNx; ++r)
      ev.gamma[kNx * j + r] = (j == 0 ? 0.0 : g[r]) + dd_rows[j][r];

    for (std::size_t i = 0; i <= j && i < nc; ++i) {
      if (i == j) {
        for (std::size_t r = 0; r < kNx; ++r) ev.phi(kNx * j + r, i) = ltv.bd[r];
      } else {
        // column i of block row j = Ad * (column i of block row j-1)
        Vec col(kNx);
        for (std::size_t r = 0; r < kNx; ++r) col[r] = ev.phi(kNx * (j - 1) + r, i);
        Vec nxt = matvec(ltv.ad, col);
        for (std::size_t r = 0; r < kNx; ++r) ev.phi(kNx * j + r, i) = nxt[r];
      }
    }

    for (std::size_t q = 0; q < kNy; ++q) ev.c(kNy * j + q, kNx * j + q) = 1.0;
  }
  return ev;
}

AugmentedEvolution build_augmented(const EvolutionMatrices& nom,
                                   const std::vector<Mat>& thetas,
                                   const Vec& past_increments,
                                   const HorizonConfig& hcfg) {
  hcfg.validate();
  const std::size_t n = static_cast<std::size_t>(hcfg.n);
  const std::size_t nc = static_cast<std::size_t>(hcfg.nc);
  if (thetas.size() != n)
    throw std::invalid_argument("build_augmented: need exactly N coefficient matrices");
  for (const Mat& th : thetas)
    if (th.rows() != n + 1 || th.cols() != kNy)
      throw std::invalid_argument("build_augmented: theta must be (N+1) x 4");
  if (past_increments.size() + 1 != n)
    throw std::invalid_argument("build_augmented: need the last N-1 applied increments");

  AugmentedEvolution aug;
  aug.psi_hat = nom.psi;
  aug.phi_hat = nom.phi;
  aug.gamma_hat = nom.gamma;

  // Prediction row j (1-based) covers window increments at steps
  // k+j-N .. k+j-1: positions 1..N-j are past, N-j+1..N map onto dU columns
  // 1..j. Skipping all-zero thetas keeps the nominal entries bit-identical.
  for (std::size_t j = 1; j <= n; ++j) {
    const Mat& th = thetas[j - 1];
    if (is_zero(th)) continue;

    for (std::size_t q = 0; q < kNy; ++q)
      aug.gamma_hat[kNx * (j - 1) + q] += th(0, q);  // intercept

    for (std::size_t pos = 1; pos + j <= n; ++pos) {  // past positions 1..N-j
      const double du_past = past_increments[j + pos - 2];
      if (du_past == 0.0) continue;
      for (std::size_t q = 0; q < kNy; ++q)
        aug.gamma_hat[kNx * (j - 1) + q] += th(pos, q) * du_past;
    }

    const std::size_t future = std::min(j, nc);  // dU columns 1..min(j, Nc)
    for (std::size_t i = 1; i <= future; ++i) {
      const std::size_t pos = n - j + i;
      for (std::size_t q = 0; q < kNy; ++q)
        aug.phi_hat(kNx * (j - 1) + q, i - 1) += th(pos, q);
    }
  }
  return aug;
}

QpProblem condense_qp(const AugmentedEvolution& aug, const Mat& c,
                      const AugmentedState& xi, const QpWeights& w, const Bounds& b,
                      const Vec& eta_ref, const HorizonConfig& hcfg) {
  hcfg.validate();
  w.validate();
  b.validate();
  const std::size_t n = static_cast<std::size_t>(hcfg.n);
  const std::size_t nc = static_cast<std::size_t>(hcfg.nc);
  if (eta_ref.size() != kNy * n)
    throw std::invalid_argument("condense_qp: eta_ref must have 4N entries");

  const std::size_t nz = nc + 1;  // [dU; sigma]
  const std::size_t m = 2 * nc + 2 * kNy * n + 1;

  // Output-space prediction pieces.
  Mat w_mat = matmul(c, aug.phi_hat);              // 4N x Nc
  Vec x0 = matvec(aug.psi_hat, xi.as_vec());       // 5N
  add_in_place(x0, aug.gamma_hat);
  Vec c0 = matvec(c, x0);                          // 4N

  Vec qbar(kNy * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t q = 0; q < kNy; ++q) qbar[kNy * j + q] = w.q1[q];

  QpProblem qp;
  qp.h = Mat(nz, nz);
  {
    Mat htl = gram(w_mat, qbar);  // Nc x Nc, exactly symmetric
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t j = 0; j < nc; ++j) qp.h(i, j) = htl(i, j);
    for (std::size_t i = 0; i < nc; ++i) qp.h(i, i) += w.q2;
    qp.h(nc, nc) = w.lambda;
  }

  qp.f = Vec(nz, 0.0);
  {
    Vec we(kNy * n);
    for (std::size_t r = 0; r < kNy * n; ++r) we[r] = qbar[r] * (c0[r] - eta_ref[r]);
    Vec ftop = matvec_t(w_mat, we);
    for (std::size_t i = 0; i < nc; ++i) qp.f[i] = ftop[i];
  }

  qp.g = Mat(m, nz);
  qp.lb = Vec(m);
  qp.ub = Vec(m);
  std::size_t row = 0;

  // Increment box.
  for (std::size_t i = 0; i < nc; ++i, ++row) {
    qp.g(row, i) = 1.0;
    qp.lb[row] = b.du_lo;
    qp.ub[row] = b.du_hi;
  }
  // Cumulative-sum rows: u_lo <= u_prev + sum dU <= u_hi.
  for (std::size_t i = 0; i < nc; ++i, ++row) {
    for (std::size_t k = 0; k <= i; ++k) qp.g(row, k) = 1.0;
    qp.lb[row] = b.u_lo - xi.u_prev;
    qp.ub[row] = b.u_hi - xi.u_prev;
  }
  // Soft state rows. Lower: W z + sigma >= eta_lo - c0; upper: W z - sigma <= eta_hi - c0.
  for (std::size_t r = 0; r < kNy * n; ++r, ++row) {
    for (std::size_t i = 0; i < nc; ++i) qp.g(row, i) = w_mat(r, i);
    qp.g(row, nc) = 1.0;
    qp.lb[row] = b.eta_lo[r % kNy] - c0[r];
    qp.ub[row] = kInf;
  }
  for (std::size_t r = 0; r < kNy * n; ++r, ++row) {
    for (std::size_t i = 0; i < nc; ++i) qp.g(row, i) = w_mat(r, i);
    qp.g(row, nc) = -1.0;
    qp.lb[row] = -kInf;
    qp.ub[row] = b.eta_hi[r % kNy] - c0[r];
  }
  // sigma >= 0.
  qp.g(row, nc) = 1.0;
  qp.lb[row] = 0.0;
  qp.ub[row] = kInf;

  return qp;
}

}  // namespace rfmpc
