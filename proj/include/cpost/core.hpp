#pragma once

#include <Eigen/Dense>

#include <array>
#include <charconv>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace cpost {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Covariance (or correlation) matrix not positive definite, even after jitter.
struct CovarianceError : Error {
  using Error::Error;
};

// A pair of sites with |correlation| >= 1.
struct DegeneratePairError : Error {
  using Error::Error;
};

struct OptimizationError : Error {
  OptimizationError(const std::string& what, Vector best, double grad_norm)
      : Error(what), best_point(std::move(best)), gradient_norm(grad_norm) {}
  Vector best_point;
  double gradient_norm;
};

struct SandwichError : Error {
  using Error::Error;
};

struct SamplerError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  ConfigError(const std::string& what, int line_no = 0)
      : Error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + what : what),
        line(line_no) {}
  int line;
};

// Working coordinates shared by the sandwich estimates, the adjustments and
// the samplers. Unconstrained means (mu, log tau, log omega).
enum class Coordinates { unconstrained, natural };

inline std::string_view to_string(Coordinates c) {
  return c == Coordinates::unconstrained ? "unconstrained" : "natural";
}

inline Coordinates parse_coordinates(std::string_view s) {
  if (s == "unconstrained") return Coordinates::unconstrained;
  if (s == "natural") return Coordinates::natural;
  throw ConfigError("unknown coordinates '" + std::string(s) + "'");
}

using Rng = std::mt19937_64;

// Independent stream seed for (master, replicate, stream). Deterministic.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate,
                                 std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(replicate),
                    static_cast<std::uint32_t>(replicate >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error("number formatting failed");
  return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '+')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw Error("not a number: '" + std::string(s) + "'");
  return v;
}

}  // namespace cpost
