#include "spvi/forward_models.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <sstream>

namespace spvi {

using std::complex;

Dft2::Dft2(int rows, int cols) : rows_(rows), cols_(cols) {
  require(rows >= 1 && cols >= 1, "dft2: bad shape");
  wr_.resize(rows, rows);
  wc_.resize(cols, cols);
  for (int k = 0; k < rows; ++k)
    for (int y = 0; y < rows; ++y) {
      const double ph = -2.0 * kPi * k * y / rows;
      wr_(k, y) = complex<double>(std::cos(ph), std::sin(ph));
    }
  for (int l = 0; l < cols; ++l)
    for (int x = 0; x < cols; ++x) {
      const double ph = -2.0 * kPi * l * x / cols;
      wc_(l, x) = complex<double>(std::cos(ph), std::sin(ph));
    }
}

CVec Dft2::forward(const Vec& img) const {
  require(img.size() == rows_ * cols_, "dft2: image size mismatch");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      img.data(), rows_, cols_);
  const CMat f = wr_ * x.cast<complex<double>>() * wc_.transpose();
  CVec out(rows_ * cols_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) out[r * cols_ + c] = f(r, c);
  return out;
}

Vec Dft2::adjoint_real(const CVec& freq) const {
  require(freq.size() == rows_ * cols_, "dft2: k-space size mismatch");
  CMat u(rows_, cols_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) u(r, c) = freq[r * cols_ + c];
  const CMat x = wr_.adjoint() * u * wc_.conjugate();
  Vec out(rows_ * cols_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) out[r * cols_ + c] = x(r, c).real();
  return out;
}

Vec Dft2::inverse_real(const CVec& freq) const {
  return adjoint_real(freq) / static_cast<double>(rows_ * cols_);
}

namespace {
int signed_freq(int k, int n) {
  return (k + n / 2) % n - n / 2;
}
}  // namespace

std::vector<int> lowfreq_select(int rows, int cols, double fraction) {
  require(fraction > 0.0 && fraction <= 1.0, "lowfreq: fraction outside (0, 1]");
  const int d = rows * cols;
  int m = static_cast<int>(std::lround(fraction * d));
  m = std::max(1, std::min(m, d));
  std::vector<std::pair<long, int>> order;
  order.reserve(static_cast<std::size_t>(d));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const long fy = signed_freq(r, rows), fx = signed_freq(c, cols);
      order.emplace_back(fy * fy + fx * fx, r * cols + c);
    }
  std::stable_sort(order.begin(), order.end());
  std::vector<int> out(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) out[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(i)].second;
  return out;
}

Vec denoise_forward(const Vec& x) { return x; }

CVec lowfreq_forward(const Vec& img, int rows, int cols, double fraction) {
  const Dft2 dft(rows, cols);
  const CVec full = dft.forward(img);
  const auto sel = lowfreq_select(rows, cols, fraction);
  CVec out(static_cast<Eigen::Index>(sel.size()));
  for (std::size_t i = 0; i < sel.size(); ++i) out[static_cast<Eigen::Index>(i)] = full[sel[i]];
  return out;
}

CVec mri_forward(const Vec& img, const Vec& mask, int rows, int cols) {
  require(mask.size() == rows * cols, "mri: mask shape mismatch");
  const Dft2 dft(rows, cols);
  CVec full = dft.forward(img);
  for (Eigen::Index i = 0; i < full.size(); ++i) full[i] *= mask[i];
  return full;
}

namespace {

struct DiscPoint {
  int y, x;
};

// Grid-snapped Bridson dart throwing; the minimum-distance property is
// enforced by an explicit neighbour check after rounding.
std::vector<DiscPoint> bridson(int rows, int cols, double radius, RngStream& rng) {
  std::vector<DiscPoint> points;
  std::vector<std::size_t> active;
  std::vector<char> occupied(static_cast<std::size_t>(rows * cols), 0);
  const double r2 = radius * radius;
  const int win = static_cast<int>(std::ceil(radius));

  auto far_enough = [&](int y, int x) {
    for (int dy = -win; dy <= win; ++dy)
      for (int dx = -win; dx <= win; ++dx) {
        const int ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= rows || nx < 0 || nx >= cols) continue;
        if (!occupied[static_cast<std::size_t>(ny * cols + nx)]) continue;
        if (dy * dy + dx * dx < r2) return false;
      }
    return true;
  };
  auto push = [&](int y, int x) {
    points.push_back({y, x});
    active.push_back(points.size() - 1);
    occupied[static_cast<std::size_t>(y * cols + x)] = 1;
  };

  push(rows / 2, cols / 2);  // DC in the centered frame
  while (!active.empty()) {
    const std::size_t pick = rng.uniform_index(active.size());
    const DiscPoint base = points[active[pick]];
    bool placed = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      const double rr = radius * (1.0 + rng.uniform());
      const double th = 2.0 * kPi * rng.uniform();
      const int y = static_cast<int>(std::lround(base.y + rr * std::sin(th)));
      const int x = static_cast<int>(std::lround(base.x + rr * std::cos(th)));
      if (y < 0 || y >= rows || x < 0 || x >= cols) continue;
      if (occupied[static_cast<std::size_t>(y * cols + x)]) continue;
      if (!far_enough(y, x)) continue;
      push(y, x);
      placed = true;
      break;
    }
    if (!placed) {
      active[pick] = active.back();
      active.pop_back();
    }
  }
  return points;
}

}  // namespace

Vec poisson_disc_mask(int rows, int cols, double accel, RngStream& rng) {
  require(accel >= 1.0, "poisson disc: accel must be >= 1");
  Vec mask = Vec::Zero(rows * cols);
  if (accel == 1.0) {
    mask.setOnes();
    return mask;
  }

  // Calibrate the dart radius to the largest value whose maximal Bridson
  // pattern still holds the target count, then thin uniformly to the exact
  // count. Thinning keeps the minimum-distance property.
  const int target_count =
      std::max(1, static_cast<int>(std::lround(rows * cols / accel)));
  const std::uint64_t base = rng.next_u64();
  auto count_at = [&](double r) {
    RngStream trial(base);
    return static_cast<int>(bridson(rows, cols, r, trial).size());
  };

  double lo = 1.0, hi = std::sqrt(2.0) * std::max(rows, cols);
  if (count_at(lo) < target_count)
    throw NumericalError("poisson disc: could not calibrate radius for accel " +
                         std::to_string(accel));
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_at(mid) >= target_count)
      lo = mid;
    else
      hi = mid;
  }

  RngStream fin(base);
  auto points = bridson(rows, cols, lo, fin);
  // Fisher-Yates over everything but the DC seed at index 0.
  for (std::size_t i = points.size() - 1; i > 1; --i)
    std::swap(points[i], points[1 + rng.uniform_index(i)]);
  points.resize(static_cast<std::size_t>(target_count));

  for (const auto& p : points) {
    // centered geometry frame -> unshifted DFT indices
    const int ky = (p.y - rows / 2 + rows) % rows;
    const int kx = (p.x - cols / 2 + cols) % cols;
    mask[ky * cols + kx] = 1.0;
  }
  return mask;
}

void UvCoverage::validate() const {
  require(n_stations >= 2, "coverage: need at least two stations");
  for (const auto& r : records) {
    require(r.station_i >= 0 && r.station_i < n_stations && r.station_j >= 0 &&
                r.station_j < n_stations && r.station_i != r.station_j,
            "coverage: invalid station pair");
    require(std::isfinite(r.u) && std::isfinite(r.v), "coverage: non-finite (u, v)");
    require(r.sigma > 0.0, "coverage: thermal noise must be positive");
  }
}

UvCoverage read_coverage(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FileError("cannot open coverage file: " + path.string());
  UvCoverage cov;
  std::string line;
  int max_station = -1;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    UvRecord r;
    if (!(ss >> r.time >> r.station_i >> r.station_j >> r.u >> r.v >> r.sigma)) continue;
    cov.records.push_back(r);
    max_station = std::max({max_station, r.station_i, r.station_j});
  }
  cov.n_stations = max_station + 1;
  cov.validate();
  return cov;
}

void write_coverage(const std::filesystem::path& path, const UvCoverage& cov) {
  std::ofstream os(path);
  if (!os) throw FileError("cannot open coverage file for write: " + path.string());
  os << "# time_stamp station_i station_j u v sigma_thermal\n";
  os.precision(17);
  for (const auto& r : cov.records)
    os << r.time << ' ' << r.station_i << ' ' << r.station_j << ' ' << r.u << ' ' << r.v
       << ' ' << r.sigma << '\n';
}

namespace {
constexpr double kUasToRad = kPi / 180.0 / 3600.0 * 1e-6;
}

CVec vlbi_row(int rows, int cols, double fov_uas, double u, double v) {
  const double delta = fov_uas * kUasToRad / cols;
  CVec row(rows * cols);
  const double cy = 0.5 * (rows - 1), cx = 0.5 * (cols - 1);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double l = (c - cx) * delta;
      const double m = (r - cy) * delta;
      const double ph = -2.0 * kPi * (u * l + v * m);
      row[r * cols + c] = complex<double>(std::cos(ph), std::sin(ph));
    }
  return row;
}

CVec vlbi_visibilities(const Vec& img, int rows, int cols, double fov_uas,
                       const UvCoverage& coverage) {
  require(!coverage.records.empty(), "vlbi: empty coverage");
  require(img.size() == rows * cols, "vlbi: image shape mismatch");
  CVec vis(static_cast<Eigen::Index>(coverage.records.size()));
  for (std::size_t i = 0; i < coverage.records.size(); ++i) {
    const auto& rec = coverage.records[i];
    const CVec row = vlbi_row(rows, cols, fov_uas, rec.u, rec.v);
    complex<double> acc(0.0, 0.0);
    for (Eigen::Index p = 0; p < img.size(); ++p) acc += img[p] * row[p];
    vis[static_cast<Eigen::Index>(i)] = acc;
  }
  return vis;
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

Vec closure_phases(const CVec& vis, const std::vector<Triangle>& triangles) {
  Vec out(static_cast<Eigen::Index>(triangles.size()));
  for (std::size_t m = 0; m < triangles.size(); ++m) {
    const auto& t = triangles[m];
    const complex<double> prod = vis[t.ij] * vis[t.jk] * std::conj(vis[t.ik]);
    out[static_cast<Eigen::Index>(m)] = std::arg(prod);
  }
  return out;
}

Vec log_closure_amplitudes(const CVec& vis, const std::vector<Quad>& quads) {
  Vec out(static_cast<Eigen::Index>(quads.size()));
  for (std::size_t m = 0; m < quads.size(); ++m) {
    const auto& q = quads[m];
    const double num = std::abs(vis[q.ij]) * std::abs(vis[q.kl]);
    const double den = std::abs(vis[q.ik]) * std::abs(vis[q.jl]);
    if (den == 0.0 || num == 0.0)
      throw NumericalError("log closure amplitude: zero-magnitude visibility");
    out[static_cast<Eigen::Index>(m)] = std::log(num / den);
  }
  return out;
}

namespace {

int baseline_index(int i, int j, int n) {
  if (i > j) std::swap(i, j);
  // row offset within the strictly-upper-triangular enumeration
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

int matrix_rank(const Mat& m) {
  if (m.rows() == 0) return 0;
  return static_cast<int>(Eigen::FullPivLU<Mat>(m).rank());
}

}  // namespace

std::pair<std::vector<StationTriangle>, std::vector<StationQuad>> select_nonredundant(
    const std::vector<int>& stations) {
  const int n = static_cast<int>(stations.size());
  require(n >= 3, "closure sets: need at least three stations");
  std::vector<int> s = stations;
  std::sort(s.begin(), s.end());

  std::vector<StationTriangle> tris;
  for (int j = 1; j < n; ++j)
    for (int k = j + 1; k < n; ++k)
      tris.push_back({s[0], s[static_cast<std::size_t>(j)], s[static_cast<std::size_t>(k)]});

  std::vector<StationQuad> quads;
  if (n >= 4) {
    const int target = n * (n - 3) / 2;
    const int n_baselines = n * (n - 1) / 2;
    Mat design(0, n_baselines);
    auto try_add = [&](int a, int b, int c, int d) {
      if (static_cast<int>(quads.size()) >= target) return;
      // log(|v_ab||v_cd| / (|v_ac||v_bd|))
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n_baselines);
      row[baseline_index(a, b, n)] += 1.0;
      row[baseline_index(c, d, n)] += 1.0;
      row[baseline_index(a, c, n)] -= 1.0;
      row[baseline_index(b, d, n)] -= 1.0;
      Mat cand(design.rows() + 1, n_baselines);
      cand << design, row;
      if (matrix_rank(cand) > matrix_rank(design)) {
        design = cand;
        quads.push_back({s[static_cast<std::size_t>(a)], s[static_cast<std::size_t>(b)],
                         s[static_cast<std::size_t>(c)], s[static_cast<std::size_t>(d)]});
      }
    };
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        for (int c = b + 1; c < n; ++c)
          for (int d = c + 1; d < n; ++d) {
            // the three pairings of the 4-set, lexicographic
            try_add(a, b, c, d);
            try_add(a, c, b, d);
            try_add(a, d, b, c);
          }
    require(static_cast<int>(quads.size()) == target,
            "closure sets: quad selection did not reach design rank");
  }
  return {tris, quads};
}

ClosureSets build_closure_sets(const UvCoverage& coverage) {
  std::map<double, std::map<std::pair<int, int>, int>> by_time;
  for (std::size_t i = 0; i < coverage.records.size(); ++i) {
    const auto& r = coverage.records[i];
    const auto key = std::minmax(r.station_i, r.station_j);
    by_time[r.time][{key.first, key.second}] = static_cast<int>(i);
  }

  ClosureSets sets;
  for (const auto& [time, baselines] : by_time) {
    (void)time;
    std::vector<int> stations;
    for (const auto& [pair, idx] : baselines) {
      (void)idx;
      if (std::find(stations.begin(), stations.end(), pair.first) == stations.end())
        stations.push_back(pair.first);
      if (std::find(stations.begin(), stations.end(), pair.second) == stations.end())
        stations.push_back(pair.second);
    }
    if (stations.size() < 3) continue;
    auto lookup = [&](int i, int j) {
      const auto key = std::minmax(i, j);
      const auto it = baselines.find({key.first, key.second});
      if (it == baselines.end())
        throw ValidationError("closure sets: missing baseline " + std::to_string(i) + "-" +
                              std::to_string(j));
      return it->second;
    };
    const auto [tris, quads] = select_nonredundant(stations);
    for (const auto& t : tris)
      sets.triangles.push_back({lookup(t.i, t.j), lookup(t.j, t.k), lookup(t.i, t.k)});
    for (const auto& q : quads)
      sets.quads.push_back(
          {lookup(q.i, q.j), lookup(q.k, q.l), lookup(q.i, q.k), lookup(q.j, q.l)});
  }
  return sets;
}

void propagate_closure_noise(VlbiMeta& meta, const CVec& vis) {
  auto var_term = [&](int idx) {
    const double a = std::abs(vis[idx]);
    require(a > 0.0, "closure noise: zero-magnitude visibility");
    const double s = meta.coverage.records[static_cast<std::size_t>(idx)].sigma;
    return s * s / (a * a);
  };
  meta.cp_sigma.resize(static_cast<Eigen::Index>(meta.sets.triangles.size()));
  for (std::size_t m = 0; m < meta.sets.triangles.size(); ++m) {
    const auto& t = meta.sets.triangles[m];
    meta.cp_sigma[static_cast<Eigen::Index>(m)] =
        std::sqrt(var_term(t.ij) + var_term(t.jk) + var_term(t.ik));
  }
  meta.lca_sigma.resize(static_cast<Eigen::Index>(meta.sets.quads.size()));
  for (std::size_t m = 0; m < meta.sets.quads.size(); ++m) {
    const auto& q = meta.sets.quads[m];
    meta.lca_sigma[static_cast<Eigen::Index>(m)] =
        std::sqrt(var_term(q.ij) + var_term(q.kl) + var_term(q.ik) + var_term(q.jl));
  }
}

// ---- Measurements ----

Vec interleave(const CVec& z) {
  Vec out(2 * z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    out[2 * i] = z[i].real();
    out[2 * i + 1] = z[i].imag();
  }
  return out;
}

CVec deinterleave(const Vec& v) {
  require(v.size() % 2 == 0, "deinterleave: odd length");
  CVec out(v.size() / 2);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out[i] = complex<double>(v[2 * i], v[2 * i + 1]);
  return out;
}

int Measurement::dim() const {
  switch (id) {
    case ModelId::denoise:
      return static_cast<int>(values.size());
    case ModelId::linear:
      return static_cast<int>(A.cols());
    default:
      return rows * cols;
  }
}

Vec forward_apply(const Measurement& m, const Vec& x) {
  switch (m.id) {
    case ModelId::denoise:
      return x;
    case ModelId::linear:
      require(x.size() == m.A.cols(), "linear: shape mismatch");
      return m.A * x;
    case ModelId::lowfreq:
      return interleave(lowfreq_forward(x, m.rows, m.cols, m.fraction));
    case ModelId::mri:
      return interleave(mri_forward(x, m.mask, m.rows, m.cols));
    case ModelId::vlbi_closure: {
      const auto& meta = *m.vlbi;
      const CVec vis =
          vlbi_visibilities(x, meta.rows, meta.cols, meta.fov_uas, meta.coverage);
      const Vec cp = closure_phases(vis, meta.sets.triangles);
      const Vec lca = log_closure_amplitudes(vis, meta.sets.quads);
      Vec out(cp.size() + lca.size());
      out << cp, lca;
      return out;
    }
  }
  throw ValidationError("forward_apply: unknown model");
}

namespace {

double sigma_at(const Measurement& m, Eigen::Index i) {
  if (m.id == ModelId::vlbi_closure) {
    const auto& meta = *m.vlbi;
    const Eigen::Index ncp = meta.cp_sigma.size();
    return i < ncp ? meta.cp_sigma[i] : meta.lca_sigma[i - ncp];
  }
  return m.noise_sigma.size() == 1 ? m.noise_sigma[0] : m.noise_sigma[i];
}

}  // namespace

double log_likelihood(const Measurement& m, const Vec& x) {
  const Vec pred = forward_apply(m, x);
  require(pred.size() == m.values.size(), "log_likelihood: measurement arity mismatch");
  double acc = 0.0;
  const Eigen::Index ncp =
      m.id == ModelId::vlbi_closure ? m.vlbi->cp_sigma.size() : Eigen::Index(0);
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    double r = m.values[i] - pred[i];
    if (m.id == ModelId::vlbi_closure && i < ncp) r = wrap_angle(r);
    const double s = sigma_at(m, i);
    acc += (r / s) * (r / s);
  }
  return -0.5 * acc;
}

Vec log_likelihood_grad(const Measurement& m, const Vec& x) {
  switch (m.id) {
    case ModelId::denoise: {
      Vec g = m.values - x;
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        const double s = sigma_at(m, i);
        g[i] /= s * s;
      }
      return g;
    }
    case ModelId::linear: {
      Vec r = m.values - m.A * x;
      for (Eigen::Index i = 0; i < r.size(); ++i) {
        const double s = sigma_at(m, i);
        r[i] /= s * s;
      }
      return m.A.transpose() * r;
    }
    case ModelId::lowfreq: {
      const auto sel = lowfreq_select(m.rows, m.cols, m.fraction);
      const Vec pred = forward_apply(m, x);
      CVec full = CVec::Zero(m.rows * m.cols);
      for (std::size_t k = 0; k < sel.size(); ++k) {
        const Eigen::Index i = static_cast<Eigen::Index>(k);
        const double sre = sigma_at(m, 2 * i), sim = sigma_at(m, 2 * i + 1);
        full[sel[k]] = complex<double>((m.values[2 * i] - pred[2 * i]) / (sre * sre),
                                       (m.values[2 * i + 1] - pred[2 * i + 1]) / (sim * sim));
      }
      return Dft2(m.rows, m.cols).adjoint_real(full);
    }
    case ModelId::mri: {
      const Vec pred = forward_apply(m, x);
      CVec full(m.rows * m.cols);
      for (Eigen::Index i = 0; i < full.size(); ++i) {
        const double sre = sigma_at(m, 2 * i), sim = sigma_at(m, 2 * i + 1);
        full[i] = m.mask[i] * complex<double>((m.values[2 * i] - pred[2 * i]) / (sre * sre),
                                              (m.values[2 * i + 1] - pred[2 * i + 1]) /
                                                  (sim * sim));
      }
      return Dft2(m.rows, m.cols).adjoint_real(full);
    }
    case ModelId::vlbi_closure: {
      const auto& meta = *m.vlbi;
      const CVec vis =
          vlbi_visibilities(x, meta.rows, meta.cols, meta.fov_uas, meta.coverage);
      const Vec pred = forward_apply(m, x);

      // chain rule through the closure quantities:
      //   d phase / dx_p   = Im(conj(v) row_p) / |v|^2
      //   d log|v| / dx_p  = Re(conj(v) row_p) / |v|^2
      const Eigen::Index ncp = meta.cp_sigma.size();
      Vec g = Vec::Zero(x.size());
      std::vector<CVec> rows_cache(meta.coverage.records.size());
      auto row_of = [&](int idx) -> const CVec& {
        auto& slot = rows_cache[static_cast<std::size_t>(idx)];
        if (slot.size() == 0) {
          const auto& rec = meta.coverage.records[static_cast<std::size_t>(idx)];
          slot = vlbi_row(meta.rows, meta.cols, meta.fov_uas, rec.u, rec.v);
        }
        return slot;
      };
      auto add_phase_grad = [&](int idx, double coeff) {
        const CVec& row = row_of(idx);
        const complex<double> cv = std::conj(vis[idx]);
        const double n2 = std::norm(vis[idx]);
        for (Eigen::Index p = 0; p < g.size(); ++p)
          g[p] += coeff * (cv * row[p]).imag() / n2;
      };
      auto add_logamp_grad = [&](int idx, double coeff) {
        const CVec& row = row_of(idx);
        const complex<double> cv = std::conj(vis[idx]);
        const double n2 = std::norm(vis[idx]);
        for (Eigen::Index p = 0; p < g.size(); ++p)
          g[p] += coeff * (cv * row[p]).real() / n2;
      };
      for (Eigen::Index t = 0; t < ncp; ++t) {
        const auto& tri = meta.sets.triangles[static_cast<std::size_t>(t)];
        const double w =
            wrap_angle(m.values[t] - pred[t]) / (meta.cp_sigma[t] * meta.cp_sigma[t]);
        add_phase_grad(tri.ij, w);
        add_phase_grad(tri.jk, w);
        add_phase_grad(tri.ik, -w);
      }
      for (Eigen::Index q = 0; q < meta.lca_sigma.size(); ++q) {
        const auto& qd = meta.sets.quads[static_cast<std::size_t>(q)];
        const Eigen::Index i = ncp + q;
        const double w =
            (m.values[i] - pred[i]) / (meta.lca_sigma[q] * meta.lca_sigma[q]);
        add_logamp_grad(qd.ij, w);
        add_logamp_grad(qd.kl, w);
        add_logamp_grad(qd.ik, -w);
        add_logamp_grad(qd.jl, -w);
      }
      return g;
    }
  }
  throw ValidationError("log_likelihood_grad: unknown model");
}

Mat dense_operator(const Measurement& m) {
  switch (m.id) {
    case ModelId::denoise:
      return Mat::Identity(m.values.size(), m.values.size());
    case ModelId::linear:
      return m.A;
    case ModelId::lowfreq: {
      const auto sel = lowfreq_select(m.rows, m.cols, m.fraction);
      const int d = m.rows * m.cols;
      Mat a(2 * static_cast<int>(sel.size()), d);
      const Dft2 dft(m.rows, m.cols);
      for (int p = 0; p < d; ++p) {
        Vec e = Vec::Zero(d);
        e[p] = 1.0;
        const CVec col = dft.forward(e);
        for (std::size_t k = 0; k < sel.size(); ++k) {
          a(2 * static_cast<int>(k), p) = col[sel[k]].real();
          a(2 * static_cast<int>(k) + 1, p) = col[sel[k]].imag();
        }
      }
      return a;
    }
    case ModelId::mri: {
      const int d = m.rows * m.cols;
      Mat a = Mat::Zero(2 * d, d);
      const Dft2 dft(m.rows, m.cols);
      for (int p = 0; p < d; ++p) {
        Vec e = Vec::Zero(d);
        e[p] = 1.0;
        const CVec col = dft.forward(e);
        for (int k = 0; k < d; ++k) {
          a(2 * k, p) = m.mask[k] * col[k].real();
          a(2 * k + 1, p) = m.mask[k] * col[k].imag();
        }
      }
      return a;
    }
    case ModelId::vlbi_closure:
      throw ValidationError("dense_operator: closure pipeline is nonlinear");
  }
  throw ValidationError("dense_operator: unknown model");
}

double flux_penalty(const Vec& x, double target, double weight) {
  const double d = x.sum() - target;
  return weight * d * d;
}

Vec flux_penalty_grad(const Vec& x, double target, double weight) {
  return Vec::Constant(x.size(), 2.0 * weight * (x.sum() - target));
}

}  // namespace spvi
