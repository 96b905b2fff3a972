#pragma once

// JSON / CSV serialization of fits, traces and reports.

#include "cpost/core.hpp"
#include "cpost/samplers.hpp"
#include "cpost/sandwich.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

namespace cpost {

using Json = nlohmann::ordered_json;

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// Row-major nested arrays.
inline Json to_json(const Matrix& m) {
  Json a = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

inline Vector vector_from_json(const Json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

inline Matrix matrix_from_json(const Json& j) {
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (static_cast<Index>(j[i].size()) != cols) throw Error("ragged matrix in JSON");
    for (Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

inline Json to_json(const SandwichFit& f) {
  Json j;
  j["theta_hat"] = to_json(f.theta_hat);
  j["H"] = to_json(f.H);
  j["J"] = to_json(f.J);
  j["lambdas"] = to_json(f.lambdas);
  j["k"] = f.k;
  j["C"] = to_json(f.C);
  j["n"] = f.n;
  j["coordinates"] = std::string(to_string(f.coordinates));
  j["loglik"] = f.loglik;
  j["trace_HinvJ"] = f.trace_HinvJ();
  j["warnings"] = f.warnings;
  return j;
}

inline SandwichFit fit_from_json(const Json& j) {
  SandwichFit f;
  f.theta_hat = vector_from_json(j.at("theta_hat"));
  f.H = matrix_from_json(j.at("H"));
  f.J = matrix_from_json(j.at("J"));
  f.lambdas = vector_from_json(j.at("lambdas"));
  f.k = j.at("k").get<double>();
  f.C = matrix_from_json(j.at("C"));
  f.n = j.at("n").get<Index>();
  f.coordinates = parse_coordinates(j.at("coordinates").get<std::string>());
  if (j.contains("loglik") && j["loglik"].is_number()) f.loglik = j["loglik"].get<double>();
  if (j.contains("warnings")) f.warnings = j["warnings"].get<std::vector<std::string>>();
  return f;
}

inline Json trace_sidecar(const ChainTrace& t, const std::string& fit_reference = "") {
  Json j;
  j["seed"] = t.seed;
  j["sampler"] = t.sampler;
  j["adjustment"] = t.kind;
  j["burn_in"] = t.burn_in;
  j["thinning"] = t.thinning;
  j["draws"] = t.size();
  j["accept_rate"] = t.accept_rate;
  j["accepted"] = t.accepted;
  j["proposed"] = t.proposed;
  j["proposal_scale"] = t.proposal_scale;
  j["skipped_updates"] = t.skipped_updates;
  j["block_updates"] = t.block_updates;
  j["warnings"] = t.warnings;
  j["fit"] = fit_reference;
  return j;
}

// iter,mu,tau,omega with natural-coordinate states; iter counts post burn-in sweeps.
inline void write_trace_csv(std::ostream& os, const ChainTrace& t) {
  os << "iter,mu,tau,omega\n";
  for (Index i = 0; i < t.size(); ++i) {
    os << i * t.thinning;
    for (Index c = 0; c < t.states.cols(); ++c) os << ',' << format_double(t.states(i, c));
    os << '\n';
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace cpost
