#ifndef SPVI_FORWARD_MODELS_HPP
#define SPVI_FORWARD_MODELS_HPP

#include <filesystem>
#include <memory>
#include <vector>

#include "spvi/common.hpp"
#include "spvi/rng.hpp"

namespace spvi {

// Factored unnormalized 2D DFT on row-major images: F = W_rows X W_cols^T.
class Dft2 {
 public:
  Dft2(int rows, int cols);
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  CVec forward(const Vec& img) const;        // row-major k-space, length rows*cols
  Vec adjoint_real(const CVec& freq) const;  // Re(E^H u)
  Vec inverse_real(const CVec& freq) const;  // real part of the inverse DFT

 private:
  int rows_, cols_;
  CMat wr_, wc_;
};

// Indices of the M lowest-frequency DFT components, ordered by squared
// radius of the signed frequency and then by raster index.
std::vector<int> lowfreq_select(int rows, int cols, double fraction);

Vec denoise_forward(const Vec& x);
CVec lowfreq_forward(const Vec& img, int rows, int cols, double fraction);
CVec mri_forward(const Vec& img, const Vec& mask, int rows, int cols);

// Poisson-disc binary k-space mask with the dart radius calibrated by
// bisection so that the nonzero fraction lands within 10% of 1/accel.
// The DC location is always kept.
Vec poisson_disc_mask(int rows, int cols, double accel, RngStream& rng);

// ---- VLBI ----

struct UvRecord {
  double time;
  int station_i, station_j;
  double u, v;          // wavelengths
  double sigma;         // per-component thermal noise on the visibility
};

struct UvCoverage {
  int n_stations = 0;
  std::vector<UvRecord> records;

  void validate() const;
};

UvCoverage read_coverage(const std::filesystem::path& path);
void write_coverage(const std::filesystem::path& path, const UvCoverage& cov);

// v(u,v) = sum_p x_p exp(-2 pi i (u l_p + v m_p)) over pixel sky coordinates
// for a square field of view given in microarcseconds.
CVec vlbi_visibilities(const Vec& img, int rows, int cols, double fov_uas,
                       const UvCoverage& coverage);

// Complex phase factors exp(-2 pi i (u l_p + v m_p)) for one record.
CVec vlbi_row(int rows, int cols, double fov_uas, double u, double v);

// Closure index sets. Entries refer to visibility indices; the third leg of
// a triangle and the last two legs of a quadrangle enter conjugated /
// inverted per the closure formulas.
struct Triangle {
  int ij, jk, ik;  // cp = angle(v_ij v_jk conj(v_ik))
};
struct Quad {
  int ij, kl, ik, jl;  // logca = log(|v_ij||v_kl| / (|v_ik||v_jl|))
};

Vec closure_phases(const CVec& vis, const std::vector<Triangle>& triangles);
Vec log_closure_amplitudes(const CVec& vis, const std::vector<Quad>& quads);

struct StationTriangle {
  int i, j, k;
};
struct StationQuad {
  int i, j, k, l;
};

// Non-redundant closure sets for one time stamp: (N-1)(N-2)/2 triangles
// anchored at the first station, N(N-3)/2 quadrangles picked greedily in
// lexicographic order under a design-matrix rank check.
std::pair<std::vector<StationTriangle>, std::vector<StationQuad>> select_nonredundant(
    const std::vector<int>& stations);

struct ClosureSets {
  std::vector<Triangle> triangles;
  std::vector<Quad> quads;
};

// Resolves the per-time-stamp non-redundant sets to visibility row indices.
ClosureSets build_closure_sets(const UvCoverage& coverage);

double wrap_angle(double a);  // to (-pi, pi]

// ---- Measurements ----

enum class ModelId { denoise, linear, lowfreq, mri, vlbi_closure };

struct VlbiMeta {
  int rows = 0, cols = 0;
  double fov_uas = 160.0;
  UvCoverage coverage;
  ClosureSets sets;
  Vec cp_sigma;   // first-order propagated closure-phase noise
  Vec lca_sigma;  // first-order propagated log-closure-amplitude noise
};

struct Measurement {
  ModelId id = ModelId::denoise;
  Vec values;       // interleaved (re, im) pairs for complex models; [cp; lca] for vlbi
  Vec noise_sigma;  // size 1 broadcasts; vlbi carries per-quantity sigmas in meta
  int rows = 0, cols = 0;
  double fraction = 0.0;              // lowfreq
  Vec mask;                           // mri
  Mat A;                              // linear
  std::shared_ptr<VlbiMeta> vlbi;

  int dim() const;  // image dimensionality the operator expects
};

Vec interleave(const CVec& z);
CVec deinterleave(const Vec& v);

// Noiseless prediction in the same layout as Measurement::values.
Vec forward_apply(const Measurement& m, const Vec& x);

double log_likelihood(const Measurement& m, const Vec& x);
Vec log_likelihood_grad(const Measurement& m, const Vec& x);

// Dense real operator matrix for linear models (complex rows realified);
// throws for the closure pipeline.
Mat dense_operator(const Measurement& m);

double flux_penalty(const Vec& x, double target, double weight);
Vec flux_penalty_grad(const Vec& x, double target, double weight);

// First-order closure noise from per-visibility thermal noise at the
// operating point x (used when a measurement bundle is generated).
void propagate_closure_noise(VlbiMeta& meta, const CVec& vis);

}  // namespace spvi

#endif
