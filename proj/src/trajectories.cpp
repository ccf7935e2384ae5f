#include "cqed/trajectories.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

#include "cqed/error.hpp"
#include "cqed/parallel.hpp"
#include "cqed/units.hpp"

namespace cqed {

static_assert(std::endian::native == std::endian::little, "stream I/O assumes a little-endian host");

double ClickStream::rate() const {
  return duration_ps == 0 ? 0.0 : static_cast<double>(timestamps.size()) / duration_us();
}

void ClickStream::validate() const {
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    if (timestamps[i] >= duration_ps)
      throw InputError("timestamp " + std::to_string(i) + " lies at or beyond the stream duration");
    if (i > 0 && timestamps[i] <= timestamps[i - 1])
      throw InputError("timestamps are not strictly increasing at index " + std::to_string(i));
  }
}

TrajectoryConfig TrajectoryConfig::from_config(const Config& cfg) {
  TrajectoryConfig t;
  t.duration_us = cfg.get_double("traj.duration_us", t.duration_us);
  t.efficiency = cfg.get_double("traj.efficiency", t.efficiency);
  t.background_rate = cfg.get_double("traj.background_rate", t.background_rate);
  t.split_ratio = cfg.get_double("traj.split_ratio", t.split_ratio);
  t.dead_time_us = cfg.get_double("traj.dead_time_us", t.dead_time_us);
  t.burn_in_us = cfg.get_double("traj.burn_in_us", t.burn_in_us);
  t.seed = cfg.get_u64("seed", t.seed);
  return t;
}

void TrajectoryConfig::validate() const {
  if (!(duration_us > 0.0) || !std::isfinite(duration_us)) throw InputError("trajectory duration must be positive");
  if (!(duration_us * kPsPerUs < 1.8e19)) throw InputError("trajectory duration overflows 64-bit picoseconds");
  if (!(efficiency >= 0.0 && efficiency <= 1.0)) throw InputError("detection efficiency must lie in [0, 1]");
  if (!(background_rate >= 0.0) || !std::isfinite(background_rate))
    throw InputError("background rate must be non-negative");
  if (!(split_ratio >= 0.0 && split_ratio <= 1.0)) throw InputError("split ratio must lie in [0, 1]");
  if (!(dead_time_us >= 0.0)) throw InputError("dead time must be non-negative");
}

namespace {

using cdouble = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;

std::uint64_t to_ps(double t_us) { return static_cast<std::uint64_t>(std::llround(t_us * kPsPerUs)); }

std::uint64_t params_hash(const RateParams& p, std::span<const oracle::Atom> atoms) {
  std::ostringstream os;
  os << format_double(p.g_max) << ',' << format_double(p.kappa) << ',' << format_double(p.gamma) << ','
     << format_double(p.eps) << ',' << format_double(p.delta_c) << ',' << format_double(p.delta_a);
  for (const auto& a : atoms) os << ';' << format_double(a.coupling) << ',' << format_double(a.detuning);
  return fnv1a64(os.str());
}

// Non-Hermitian evolution of the unnormalized conditional state.
class Evolution {
 public:
  explicit Evolution(const oracle::Unraveling& u) : k_(Mat(-cdouble(0.0, 1.0) * u.h_eff)) {
    // i(H - H^dag) = sum C^dag C: the norm loss rate operator
    loss_ = Mat::Zero(k_.rows(), k_.cols());
    for (const auto& c : u.jumps) loss_ += c.adjoint() * c;
    const double norm_inf = k_.cwiseAbs().rowwise().sum().maxCoeff();
    dt_ = 0.5 / norm_inf;
    if (!(dt_ > 1e-12) || !std::isfinite(dt_)) throw NumericalError("trajectory step size underflows");
    step_ = (k_ * dt_).exp();
  }

  double dt() const { return dt_; }
  void step(const Vec& psi, Vec& out) const { out.noalias() = step_ * psi; }
  // exp(K s) psi by its Taylor series; |K s| <= 1/2 here.
  Vec propagate(const Vec& psi, double s) const {
    Vec out = psi, term = psi;
    for (int k = 1; k < 60; ++k) {
      term = (k_ * term) * (s / k);
      out += term;
      if (term.norm() <= 1e-17 * out.norm()) break;
    }
    return out;
  }
  double loss_rate(const Vec& psi) const { return (psi.dot(loss_ * psi)).real(); }

  // Time s in (0, dt] at which |exp(K s) psi|^2 falls to r; |psi|^2 > r >= |exp(K dt) psi|^2.
  double crossing(const Vec& psi, double r) const {
    double lo = 0.0, hi = dt_, s = 0.5 * dt_;
    for (int it = 0; it < 200; ++it) {
      const Vec phi = propagate(psi, s);
      const double f = phi.squaredNorm() - r;
      if (f > 0.0) lo = s; else hi = s;
      if (hi - lo <= 1e-15 * std::max(dt_, 1.0) || f == 0.0) return s;
      const double d = -loss_rate(phi);
      double next = d < 0.0 ? s - f / d : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - s) <= 1e-13 * dt_) return next;
      s = next;
    }
    throw NumericalError("waiting-time search did not converge");
  }

 private:
  Mat k_, loss_, step_;
  double dt_ = 0.0;
};

std::vector<std::uint64_t> merge_sorted(std::vector<std::uint64_t> a, const std::vector<std::uint64_t>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

void write_u16(std::string& out, std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); }
void write_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }
std::uint16_t read_u16(std::string_view b, std::size_t at) {
  std::uint16_t v;
  std::memcpy(&v, b.data() + at, 2);
  return v;
}
std::uint64_t read_u64(std::string_view b, std::size_t at) {
  std::uint64_t v;
  std::memcpy(&v, b.data() + at, 8);
  return v;
}

constexpr char kMagic[4] = {'C', 'Q', 'T', 'S'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 24;

}  // namespace

double expected_detected_rate(const RateParams& params, std::span<const oracle::Atom> atoms,
                              const TrajectoryConfig& cfg) {
  cfg.validate();
  const auto rho = oracle::steady_state(params, atoms);
  const oracle::TruncatedBasis basis(atoms.size());
  const Mat a = basis.annihilation();
  const double n = (rho.rho * a.adjoint() * a).trace().real();
  return cfg.efficiency * 2.0 * params.kappa * n + cfg.background_rate;
}

Synthesis mcwf_synthesize(const RateParams& params, std::span<const oracle::Atom> atoms, const TrajectoryConfig& cfg) {
  params.validate();
  cfg.validate();
  if (!(params.eps > 0.0)) throw InputError("zero drive: the steady intracavity intensity vanishes");
  const auto u = oracle::unraveling(params, atoms);
  Evolution ev(u);

  std::mt19937_64 jump_rng(mix_seed(cfg.seed, 1));
  std::mt19937_64 route_rng(mix_seed(cfg.seed, 2));
  std::mt19937_64 bg_rng(mix_seed(cfg.seed, 3));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // r in (0, 1]
  auto threshold = [&] { return 1.0 - unif(jump_rng); };

  const double burn_in = cfg.burn_in_us >= 0.0 ? cfg.burn_in_us
                                               : 20.0 / std::min(params.kappa, 0.5 * params.gamma);
  const std::uint64_t duration_ps = to_ps(cfg.duration_us);

  Synthesis out;
  std::vector<std::uint64_t> det[2];
  Vec psi = Vec::Zero(u.basis.dim());
  psi[u.basis.vacuum()] = 1.0;
  double t = -burn_in;
  double r = threshold();
  std::vector<double> weights(u.jumps.size());
  Vec next(psi.size());
  while (t < cfg.duration_us) {
    ev.step(psi, next);
    if (next.squaredNorm() > r) {
      psi.swap(next);
      t += ev.dt();
      continue;
    }
    const double s = ev.crossing(psi, r);
    t += s;
    if (t >= cfg.duration_us) break;
    const Vec at = ev.propagate(psi, s);
    for (std::size_t k = 0; k < u.jumps.size(); ++k) weights[k] = (u.jumps[k] * at).squaredNorm();
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const std::size_t k = pick(jump_rng);
    psi = u.jumps[k] * at;
    const double nrm = psi.norm();
    if (!(nrm > 0.0)) throw NumericalError("jump onto a null state");
    psi /= nrm;
    if (std::abs(psi.squaredNorm() - 1.0) > 1e-12) throw NumericalError("renormalization after a jump failed");
    r = threshold();
    if (t < 0.0) continue;
    if (k == 0) {
      ++out.emissions;
      if (unif(route_rng) < cfg.efficiency) {
        const std::uint64_t ps = to_ps(t);
        if (ps < duration_ps) det[unif(route_rng) < cfg.split_ratio ? 0 : 1].push_back(ps);
      }
    } else {
      ++out.atomic_jumps;
    }
  }

  std::vector<std::uint64_t> bg[2];
  if (cfg.background_rate > 0.0) {
    std::exponential_distribution<double> gap(cfg.background_rate);
    for (double tb = gap(bg_rng); tb < cfg.duration_us; tb += gap(bg_rng)) {
      const std::uint64_t ps = to_ps(tb);
      if (ps >= duration_ps) break;
      bg[unif(bg_rng) < cfg.split_ratio ? 0 : 1].push_back(ps);
      ++out.background;
    }
  }

  const std::uint64_t hash = params_hash(params, atoms);
  ClickStream* streams[2] = {&out.first, &out.second};
  for (int d = 0; d < 2; ++d) {
    ClickStream& s = *streams[d];
    s.timestamps = merge_sorted(std::move(det[d]), bg[d]);
    s.duration_ps = duration_ps;
    s.detector = static_cast<std::uint16_t>(d);
    s.params_hash = hash;
    s.seed = cfg.seed;
    if (cfg.dead_time_us > 0.0) s = apply_dead_time(s, cfg.dead_time_us);
  }
  return out;
}

ClickStream thin_stream(const ClickStream& stream, double keep, std::uint64_t seed) {
  if (!(keep >= 0.0 && keep <= 1.0)) throw InputError("keep probability must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ClickStream out = stream;
  out.timestamps.clear();
  for (auto t : stream.timestamps)
    if (unif(rng) < keep) out.timestamps.push_back(t);
  return out;
}

ClickStream apply_dead_time(const ClickStream& stream, double dead_time_us) {
  if (!(dead_time_us >= 0.0)) throw InputError("dead time must be non-negative");
  const std::uint64_t dead = to_ps(dead_time_us);
  ClickStream out = stream;
  out.timestamps.clear();
  for (auto t : stream.timestamps)
    if (out.timestamps.empty() || t - out.timestamps.back() >= dead) out.timestamps.push_back(t);
  return out;
}

std::string encode_stream(const ClickStream& stream) {
  stream.validate();
  std::string out;
  out.reserve(kHeaderBytes + 8 * stream.timestamps.size());
  out.append(kMagic, 4);
  write_u16(out, kVersion);
  write_u16(out, stream.detector);
  write_u64(out, stream.timestamps.size());
  write_u64(out, stream.duration_ps);
  out.append(reinterpret_cast<const char*>(stream.timestamps.data()), 8 * stream.timestamps.size());
  return out;
}

ClickStream decode_stream(std::string_view b) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (i >= b.size()) throw ParseError("stream truncated inside the magic", b.size());
    if (b[i] != kMagic[i]) throw ParseError("bad magic, expected CQTS", i);
  }
  if (b.size() < kHeaderBytes) throw ParseError("stream header truncated", b.size());
  const std::uint16_t version = read_u16(b, 4);
  if (version != kVersion) throw ParseError("unsupported stream version " + std::to_string(version), 4);
  ClickStream s;
  s.detector = read_u16(b, 6);
  const std::uint64_t count = read_u64(b, 8);
  s.duration_ps = read_u64(b, 16);
  const std::uint64_t body = b.size() - kHeaderBytes;
  if (count > body / 8) throw ParseError("stream holds fewer timestamps than its count of " + std::to_string(count),
                                         kHeaderBytes + 8 * (body / 8));
  if (body != 8 * count) throw ParseError("trailing bytes after the last timestamp", kHeaderBytes + 8 * count);
  s.timestamps.resize(count);
  if (count) std::memcpy(s.timestamps.data(), b.data() + kHeaderBytes, 8 * count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t at = kHeaderBytes + 8 * i;
    if (s.timestamps[i] >= s.duration_ps) throw ParseError("timestamp at or beyond the stream duration", at);
    if (i > 0 && s.timestamps[i] <= s.timestamps[i - 1]) throw ParseError("timestamps not strictly increasing", at);
  }
  return s;
}

void write_stream(const ClickStream& stream, const std::string& path) {
  const std::string bytes = encode_stream(stream);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw InputError("write to " + path + " failed");
}

ClickStream read_stream(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return decode_stream(ss.str());
}

void write_stream_csv(const ClickStream& stream, const std::string& path) {
  stream.validate();
  std::ofstream os(path);
  if (!os) throw InputError("cannot open " + path + " for writing");
  os << "# detector: " << stream.detector << "\n# duration_ps: " << stream.duration_ps << "\n";
  for (auto t : stream.timestamps) os << t << '\n';
  if (!os) throw InputError("write to " + path + " failed");
}

ClickStream read_stream_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path);
  ClickStream s;
  bool have_duration = false;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(is, line)) {
    const std::uint64_t here = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string key = line.substr(1, colon - 1);
      key.erase(0, key.find_first_not_of(' '));
      const std::string value = line.substr(colon + 1);
      try {
        if (key == "detector") s.detector = static_cast<std::uint16_t>(std::stoul(value));
        if (key == "duration_ps") {
          s.duration_ps = std::stoull(value);
          have_duration = true;
        }
      } catch (const std::exception&) {
        throw ParseError("bad value in header line", here);
      }
      continue;
    }
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(line, &used);
    } catch (const std::exception&) {
      throw ParseError("timestamp is not an unsigned integer", here);
    }
    if (used != line.size() || line[0] == '-') throw ParseError("timestamp is not an unsigned integer", here);
    if (!s.timestamps.empty() && v <= s.timestamps.back()) throw ParseError("timestamps not strictly increasing", here);
    if (have_duration && v >= s.duration_ps) throw ParseError("timestamp at or beyond the stream duration", here);
    s.timestamps.push_back(v);
  }
  if (!have_duration) s.duration_ps = s.timestamps.empty() ? 0 : s.timestamps.back() + 1;
  return s;
}

}  // namespace cqed
