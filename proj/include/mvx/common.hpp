#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#define MVX_VERSION "0.1.0"

namespace mvx {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Error raised when a simulation or evaluation produces unusable values
/// (blow-up, non-finite coefficient output, bad configuration).
class SimError : public std::runtime_error {
 public:
  explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

/// sign with the convention sign(0) = 0, used by the |x|-type Lyapunov
/// functions whose gradient at the kink is taken to be 0.
inline double sign0(double v) { return (v > 0.0) - (v < 0.0); }

/// Shortest decimal string that round-trips a double (17 significant digits).
inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Compact form for human-readable reports.
inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string fmt_vec(const Vec& x) {
  std::string s = "(";
  for (std::int64_t k = 0; k < x.size(); ++k) {
    if (k) s += ", ";
    s += fmt6(x[k]);
  }
  return s + ")";
}

/// Radial projection onto the closed ball of radius `radius`:
/// x -> radius * x / max(radius, |x|). Identity inside the ball
/// (bitwise: the scale factor is exactly 1.0 there).
inline Vec truncate(const Vec& x, double radius) {
  if (radius <= 0.0) throw SimError("truncate: radius must be positive");
  const double nrm = x.norm();
  const double scale = radius / std::max(radius, nrm);
  return x * scale;
}

/// Runs fn(chunk_begin, chunk_end) over [0,n) split into fixed-size chunks.
/// Chunk boundaries depend only on n, never on the thread count, so any
/// writes keyed by index are bitwise reproducible for 1..k threads.
inline void parallel_for_chunks(std::int64_t n, int threads,
                                const std::function<void(std::int64_t, std::int64_t)>& fn,
                                std::int64_t chunk = 512) {
  if (n <= 0) return;
  const std::int64_t nchunks = (n + chunk - 1) / chunk;
  if (threads <= 1 || nchunks == 1) {
    for (std::int64_t c = 0; c < nchunks; ++c)
      fn(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  auto worker = [&] {
    for (;;) {
      const std::int64_t c = next.fetch_add(1);
      if (c >= nchunks || failed.load()) return;
      try {
        fn(c * chunk, std::min(n, (c + 1) * chunk));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  const int nt = static_cast<int>(std::min<std::int64_t>(threads, nchunks));
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mvx
