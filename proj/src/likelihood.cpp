#include "mimoloc/likelihood.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

namespace mimo {

GramMatrix make_gram(Eigen::MatrixXcd values) {
  GramMatrix g;
  g.values = std::move(values);
  if (g.values.size() == 0) {
    g.condition = std::numeric_limits<double>::infinity();
    return g;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(g.values,
                                                      Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  g.condition = (lo > 0.0 && hi > 0.0) ? hi / lo
                                       : std::numeric_limits<double>::infinity();
  return g;
}

GramMatrix gram_matrix(const Eigen::Ref<const Eigen::MatrixXcd> &replicas) {
  return make_gram(gram(replicas));
}

Eigen::VectorXcd alpha_mle_joint(const GramMatrix &gram,
                                 const Eigen::Ref<const Eigen::VectorXcd> &cross) {
  if (gram.rank_deficient()) {
    throw SingularGramError();
  }
  if (cross.size() != gram.size()) {
    throw Error("cross vector does not match the Gram matrix");
  }
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(gram.values);
  Eigen::VectorXcd alpha = lu.solve(cross);
  // One step of iterative refinement keeps the residual near round-off even
  // for moderately conditioned overlaps.
  alpha += lu.solve(cross - gram.values * alpha);
  return alpha;
}

bool delays_coincident(std::span<const double> delays, double tolerance) {
  for (std::size_t i = 0; i < delays.size(); ++i) {
    for (std::size_t j = i + 1; j < delays.size(); ++j) {
      if (std::abs(delays[i] - delays[j]) < tolerance) {
        return true;
      }
    }
  }
  return false;
}

Eigen::VectorXcd whitened_replica(const Position2D &theta,
                                  const PathContext &ctx) {
  return ctx.whitener.apply(
      steering_vector(ctx.waveforms, ctx.path, theta, ctx.layout).s_tilde);
}

namespace {

void require_whitened(const PathObservation &obs, const PathContext &ctx) {
  if (!obs.whitened) {
    throw Error("likelihood evaluation requires a whitened observation");
  }
  if (obs.r.size() != ctx.waveforms.sample_count) {
    throw Error("observation length does not match the waveform set");
  }
}

Eigen::MatrixXcd replica_matrix(std::span<const Position2D> thetas,
                                const PathContext &ctx) {
  Eigen::MatrixXcd s(ctx.waveforms.sample_count,
                     static_cast<Index>(thetas.size()));
  for (std::size_t g = 0; g < thetas.size(); ++g) {
    s.col(static_cast<Index>(g)) = whitened_replica(thetas[g], ctx);
  }
  return s;
}

void check_delays(std::span<const Position2D> thetas, const PathContext &ctx) {
  std::vector<double> delays;
  delays.reserve(thetas.size());
  for (const auto &t : thetas) {
    delays.push_back(ctx.layout.delay(t, ctx.path));
  }
  if (delays_coincident(delays, ctx.singularity_tolerance *
                                    ctx.waveforms.sample_interval)) {
    throw SingularGramError();
  }
}

} // namespace

double path_loglik(const Position2D &theta, const PathObservation &obs,
                   const PathContext &ctx, bool *out_of_window) {
  require_whitened(obs, ctx);
  if (out_of_window != nullptr) {
    *out_of_window = false;
  }
  Eigen::VectorXcd s;
  try {
    s = whitened_replica(theta, ctx);
  } catch (const WindowError &) {
    if (out_of_window != nullptr) {
      *out_of_window = true;
    }
    return 0.0;
  }
  return concentrated_loglik(s, obs.r);
}

GramMatrix gram_matrix(std::span<const Position2D> thetas,
                       const PathContext &ctx) {
  if (thetas.empty()) {
    throw Error("gram matrix needs at least one location");
  }
  return gram_matrix(replica_matrix(thetas, ctx));
}

Eigen::VectorXcd alpha_mle_joint(std::span<const Position2D> thetas,
                                 const PathObservation &obs,
                                 const PathContext &ctx) {
  require_whitened(obs, ctx);
  check_delays(thetas, ctx);
  const Eigen::MatrixXcd s = replica_matrix(thetas, ctx);
  return alpha_mle_joint(gram_matrix(s), s.adjoint() * obs.r);
}

Complex alpha_mle_isolated(const Position2D &theta, const PathObservation &obs,
                           const PathContext &ctx) {
  require_whitened(obs, ctx);
  const Eigen::VectorXcd s = whitened_replica(theta, ctx);
  const double energy = s.squaredNorm();
  if (!(energy > 0.0)) {
    throw Error("zero-energy replica");
  }
  return s.dot(obs.r) / energy;
}

double joint_path_loglik(std::span<const Position2D> thetas,
                         const PathObservation &obs, const PathContext &ctx) {
  require_whitened(obs, ctx);
  check_delays(thetas, ctx);
  const Eigen::MatrixXcd s = replica_matrix(thetas, ctx);
  const Eigen::VectorXcd c = s.adjoint() * obs.r;
  const Eigen::VectorXcd alpha = alpha_mle_joint(gram_matrix(s), c);
  return 0.5 * std::real(c.dot(alpha));
}

// ---------------------------------------------------------------------------

ReplicaBank::ReplicaBank(const Grid &grid, const AntennaLayout &layout,
                         const WaveformSet &waveforms,
                         std::vector<Whitener> whiteners)
    : grid_(grid), layout_(layout), waveforms_(waveforms),
      whiteners_(std::move(whiteners)) {
  const Index P = paths();
  const Index C = cells();
  if (static_cast<Index>(whiteners_.size()) != P) {
    throw ConfigError("one whitener per path is required");
  }
  if (waveforms_.count() < layout_.tx.size()) {
    throw ConfigError("fewer waveforms than transmitters");
  }
  const Index n = waveforms_.sample_count;
  const Index np = waveforms_.pulse_samples;

  inverse_cov_.resize(static_cast<std::size_t>(P));
  for (Index p = 0; p < P; ++p) {
    const auto &w = whiteners_[static_cast<std::size_t>(p)];
    if (!w.is_scalar()) {
      if (w.matrix().rows() != n) {
        throw ConfigError("whitener size does not match the window");
      }
      inverse_cov_[static_cast<std::size_t>(p)] = w.matrix() * w.matrix();
    }
  }

  fft_size_ = static_cast<Index>(
      std::bit_ceil(static_cast<std::uint64_t>(n + np + 16)));
  Eigen::FFT<double> fft;
  for (std::size_t k = 0; k < waveforms_.count(); ++k) {
    const auto pulse = waveforms_.pulse(k);
    Eigen::VectorXcd a(2 * np - 1);
    for (Index m = -(np - 1); m < np; ++m) {
      const Index lo = std::max<Index>(0, -m);
      const Index hi = std::min<Index>(np, np - m);
      a[m + np - 1] = pulse.segment(lo, hi - lo).dot(pulse.segment(lo + m, hi - lo));
    }
    autocorr_.push_back(std::move(a));

    Eigen::VectorXcd padded = Eigen::VectorXcd::Zero(fft_size_);
    padded.head(np) = pulse;
    Eigen::VectorXcd spec(fft_size_);
    fft.fwd(spec, padded);
    pulse_spectra_.push_back(std::move(spec));
  }

  entries_.resize(static_cast<std::size_t>(P * C));
  auto energy = std::make_shared<Eigen::ArrayXXd>(C, P);
  auto bins = std::make_shared<Eigen::ArrayXXi>(C, P);
  for (Index p = 0; p < P; ++p) {
    const PathId path = layout_.path(static_cast<std::size_t>(p));
    for (Index c = 0; c < C; ++c) {
      auto &e = entries_[static_cast<std::size_t>(p * C + c)];
      e.delay = layout_.delay(grid_.center(c), path);
      e.inside = e.delay + waveforms_.tau_c <= waveforms_.window;
      const SampleDelay sd = split_delay(e.delay / waveforms_.sample_interval);
      e.lag = sd.lag;
      e.weights = FractionalDelay::weights(sd.mu);
      (*bins)(c, p) = static_cast<int>(delay_bin(e.delay, waveforms_.tau_c));
    }
  }
  energy_ = energy;
  bins_ = bins;
  for (Index p = 0; p < P; ++p) {
    for (Index c = 0; c < C; ++c) {
      (*energy)(c, p) = std::real(gram_entry(c, c, p));
    }
  }
}

Eigen::VectorXcd ReplicaBank::correlate(Index path,
                                        const Eigen::VectorXcd &y) const {
  const Index n = waveforms_.sample_count;
  if (y.size() != n) {
    throw Error("observation length does not match the waveform set");
  }
  const auto &w = whiteners_[static_cast<std::size_t>(path)];
  Eigen::VectorXcd padded = Eigen::VectorXcd::Zero(fft_size_);
  padded.head(n) = w.apply_adjoint(y);
  // Plans are cached per FFT object; keep one per thread.
  thread_local Eigen::FFT<double> fft;
  Eigen::VectorXcd spec(fft_size_);
  fft.fwd(spec, padded);
  const PathId pid = layout_.path(static_cast<std::size_t>(path));
  spec.array() *= pulse_spectra_[static_cast<std::size_t>(pid.tx)].array().conjugate();
  Eigen::VectorXcd circ(fft_size_);
  fft.inv(circ, spec);

  const Index size = n + FractionalDelay::kTaps - min_lag() + 1;
  Eigen::VectorXcd out(size);
  for (Index i = 0; i < size; ++i) {
    const Index lag = min_lag() + i;
    out[i] = circ[(lag % fft_size_ + fft_size_) % fft_size_];
  }
  return out;
}

Complex ReplicaBank::cross(Index cell, Index path,
                           const Eigen::VectorXcd &corr) const {
  const Entry &e = entry(cell, path);
  if (!e.inside) {
    return {};
  }
  Complex acc;
  for (int j = 0; j < FractionalDelay::kTaps; ++j) {
    if (e.weights[j] != 0.0) {
      acc += e.weights[j] * corr[e.lag + j + FractionalDelay::kFirstTap - min_lag()];
    }
  }
  return acc;
}

Complex ReplicaBank::gram_entry(Index cell_a, Index cell_b, Index path) const {
  const Entry &a = entry(cell_a, path);
  const Entry &b = entry(cell_b, path);
  if (!a.inside || !b.inside) {
    return {};
  }
  const Index np = waveforms_.pulse_samples;
  const Index n = waveforms_.sample_count;
  if (std::abs(a.lag - b.lag) >= np + FractionalDelay::kTaps) {
    return {};
  }
  const auto &w = whiteners_[static_cast<std::size_t>(path)];
  auto in_window = [&](const Entry &e) {
    return e.lag + FractionalDelay::kFirstTap >= 0 &&
           e.lag + FractionalDelay::kFirstTap + FractionalDelay::kTaps + np <= n;
  };
  if (!w.is_scalar() || !in_window(a) || !in_window(b)) {
    return direct_inner(cell_a, cell_b, path);
  }
  const PathId pid = layout_.path(static_cast<std::size_t>(path));
  const Eigen::VectorXcd &acf = autocorr_[static_cast<std::size_t>(pid.tx)];
  Complex acc;
  for (int j1 = 0; j1 < FractionalDelay::kTaps; ++j1) {
    if (a.weights[j1] == 0.0) {
      continue;
    }
    for (int j2 = 0; j2 < FractionalDelay::kTaps; ++j2) {
      if (b.weights[j2] == 0.0) {
        continue;
      }
      const Index m = (a.lag + j1) - (b.lag + j2);
      if (std::abs(m) < np) {
        acc += a.weights[j1] * b.weights[j2] * acf[m + np - 1];
      }
    }
  }
  return w.scale() * w.scale() * acc;
}

Complex ReplicaBank::direct_inner(Index cell_a, Index cell_b, Index path) const {
  const Index n = waveforms_.sample_count;
  const Index np = waveforms_.pulse_samples;
  const PathId pid = layout_.path(static_cast<std::size_t>(path));
  const auto pulse = waveforms_.pulse(static_cast<std::size_t>(pid.tx));
  const Entry &a = entry(cell_a, path);
  const Entry &b = entry(cell_b, path);
  const Eigen::VectorXcd sa =
      delayed_replica(pulse, a.delay / waveforms_.sample_interval, n);
  const Eigen::VectorXcd sb =
      delayed_replica(pulse, b.delay / waveforms_.sample_interval, n);
  const auto &w = whiteners_[static_cast<std::size_t>(path)];
  if (w.is_scalar()) {
    return w.scale() * w.scale() * sa.dot(sb);
  }
  auto support = [&](const Entry &e) {
    const Index lo = std::clamp<Index>(e.lag + FractionalDelay::kFirstTap, 0, n);
    const Index hi = std::clamp<Index>(
        e.lag + FractionalDelay::kFirstTap + FractionalDelay::kTaps + np, 0, n);
    return std::pair{lo, hi - lo};
  };
  const auto [a0, al] = support(a);
  const auto [b0, bl] = support(b);
  const auto &rinv = inverse_cov_[static_cast<std::size_t>(path)];
  return sa.segment(a0, al).dot(rinv.block(a0, b0, al, bl) * sb.segment(b0, bl));
}

// ---------------------------------------------------------------------------

ObjectiveField::ObjectiveField(Grid grid, Eigen::ArrayXXd per_path,
                               Eigen::ArrayXXcd cross,
                               std::shared_ptr<const Eigen::ArrayXXd> energy,
                               std::shared_ptr<const Eigen::ArrayXXi> bins)
    : grid_(std::move(grid)), per_path_(std::move(per_path)),
      cross_(std::move(cross)), energy_(std::move(energy)),
      bins_(std::move(bins)) {
  if (per_path_.rows() != grid_.size() || !energy_ || !bins_ ||
      energy_->rows() != per_path_.rows() || bins_->rows() != per_path_.rows() ||
      energy_->cols() != per_path_.cols() || bins_->cols() != per_path_.cols()) {
    throw Error("objective field dimensions do not match the grid");
  }
  subtracted_ = PathMask::Constant(per_path_.rows(), per_path_.cols(), false);
  combined_.resize(per_path_.rows());
  for (Index c = 0; c < cells(); ++c) {
    recompute(c);
  }
}

void ObjectiveField::recompute(Index cell) {
  double acc = 0.0;
  for (Index p = 0; p < paths(); ++p) {
    if (!subtracted_(cell, p)) {
      acc += per_path_(cell, p);
    }
  }
  combined_[cell] = acc;
}

Complex ObjectiveField::alpha(Index cell, Index path) const {
  const double e = (*energy_)(cell, path);
  return e > 0.0 ? cross_(cell, path) / e : Complex{};
}

Index ObjectiveField::argmax() const {
  Index best = 0;
  for (Index c = 1; c < cells(); ++c) {
    if (combined_[c] > combined_[best]) {
      best = c;
    }
  }
  return best;
}

Index ObjectiveField::argmax(const Mask &mask) const {
  Index best = -1;
  for (Index c = 0; c < cells(); ++c) {
    if (mask[c] && (best < 0 || combined_[c] > combined_[best])) {
      best = c;
    }
  }
  return best;
}

Footprint ObjectiveField::footprint(Index cell) const {
  const auto &b = *bins_;
  Footprint fp;
  fp.per_path = (b - b.row(cell).replicate(cells(), 1)).abs() <= 1;
  fp.any = fp.per_path.rowwise().any();
  return fp;
}

Index ObjectiveField::cancelled_paths(Index cell) const {
  return subtracted_.row(cell).count();
}

ObjectiveField::PathMask ObjectiveField::cancel(const PathMask &mask) {
  if (mask.rows() != cells() || mask.cols() != paths()) {
    throw Error("cancellation mask does not match the field");
  }
  PathMask applied = mask && !subtracted_;
  subtracted_ = subtracted_ || mask;
  const Eigen::Array<bool, Eigen::Dynamic, 1> touched = applied.rowwise().any();
  for (Index c = 0; c < cells(); ++c) {
    if (touched[c]) {
      recompute(c);
    }
  }
  return applied;
}

ObjectiveField objective_field(const std::vector<PathObservation> &observations,
                               const ReplicaBank &bank) {
  const Index P = bank.paths();
  const Index C = bank.cells();
  if (static_cast<Index>(observations.size()) != P) {
    throw Error("one observation per path is required");
  }
  const auto &energy = *bank.energy();
  Eigen::ArrayXXd per_path(C, P);
  Eigen::ArrayXXcd cross(C, P);
  for (Index p = 0; p < P; ++p) {
    const auto &obs = observations[static_cast<std::size_t>(p)];
    if (!obs.whitened) {
      throw Error("likelihood evaluation requires a whitened observation");
    }
    const Eigen::VectorXcd corr = bank.correlate(p, obs.r);
    for (Index c = 0; c < C; ++c) {
      const Complex x = bank.cross(c, p, corr);
      const double e = energy(c, p);
      cross(c, p) = x;
      per_path(c, p) = e > 0.0 ? 0.5 * std::norm(x) / e : 0.0;
    }
  }
  return ObjectiveField(bank.grid(), std::move(per_path), std::move(cross),
                        bank.energy(), bank.bins());
}

ObjectiveField objective_field(const std::vector<PathObservation> &observations,
                               const WaveformSet &waveforms,
                               const AntennaLayout &layout, const Grid &grid) {
  const ReplicaBank bank(grid, layout, waveforms,
                         std::vector<Whitener>(layout.path_count(),
                                               Whitener::scalar(1.0)));
  return objective_field(observations, bank);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kGridMagic[8] = {'M', 'I', 'M', 'O', 'G', 'R', 'I', 'D'};
constexpr std::size_t kGridHeaderBytes = 32;

Eigen::ArrayXd field_values(const ObjectiveField &field, int path) {
  if (path < 0) {
    return field.combined();
  }
  if (path >= field.paths()) {
    throw Error("gridmap path index out of range");
  }
  return field.per_path().col(path) *
         (!field.subtracted().col(path)).cast<double>();
}

template <typename T> void put_le(std::ostream &out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(reinterpret_cast<const char *>(bytes), sizeof(T));
}

template <typename T> T get_le(std::istream &in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char *>(bytes), sizeof(T));
  if (!in) {
    throw Error("gridmap file truncated");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

} // namespace

void write_gridmap_csv(const std::filesystem::path &file,
                       const ObjectiveField &field, int path) {
  const Eigen::ArrayXd v = field_values(field, path);
  std::ofstream out(file);
  if (!out) {
    throw Error("cannot open " + file.string() + " for writing");
  }
  out << "x_m,y_m,value\n";
  char line[128];
  for (Index c = 0; c < field.cells(); ++c) {
    const Position2D p = field.grid().center(c);
    std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g\n", p.x(), p.y(), v[c]);
    out << line;
  }
  if (!out) {
    throw Error("write failed: " + file.string());
  }
}

void write_gridmap_binary(const std::filesystem::path &file,
                          const ObjectiveField &field, int path) {
  const Eigen::ArrayXd v = field_values(field, path);
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw Error("cannot open " + file.string() + " for writing");
  }
  out.write(kGridMagic, sizeof(kGridMagic));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.grid().nx()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.grid().ny()));
  put_le<std::int32_t>(out, path < 0 ? -1 : path);
  const char pad[kGridHeaderBytes - 20] = {};
  out.write(pad, sizeof(pad));
  for (Index c = 0; c < v.size(); ++c) {
    put_le<double>(out, v[c]);
  }
  if (!out) {
    throw Error("write failed: " + file.string());
  }
}

Gridmap read_gridmap_binary(const std::filesystem::path &file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + file.string());
  }
  char magic[sizeof(kGridMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kGridMagic, sizeof(magic)) != 0) {
    throw Error("not a gridmap file: " + file.string());
  }
  Gridmap g;
  g.nx = get_le<std::uint32_t>(in);
  g.ny = get_le<std::uint32_t>(in);
  g.path = get_le<std::int32_t>(in);
  in.ignore(kGridHeaderBytes - 20);
  g.values.resize(static_cast<std::size_t>(g.nx) * g.ny);
  for (auto &v : g.values) {
    v = get_le<double>(in);
  }
  return g;
}

} // namespace mimo
