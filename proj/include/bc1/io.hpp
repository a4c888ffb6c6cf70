#pragma once

// JSON / CSV serialization of couplings, solutions and curve samples.
// Complex numbers serialize as [re, im]; doubles round-trip exactly.

#include "bc1/curve.hpp"
#include "bc1/heun.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>

namespace bc1 {

class FormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

using json = nlohmann::json;

inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline cplx cplx_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw FormatError("expected [re, im], got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json couplings_to_json(const Couplings& c) {
  return json{{"m", c.m}, {"m_prime", c.m_prime}, {"gamma", to_json(c.gamma)}};
}

inline Couplings couplings_from_json(const json& j) {
  Couplings c;
  for (int p = 0; p < 4; ++p) {
    c.m[p] = j.at("m").at(p).get<int>();
    c.m_prime[p] = j.at("m_prime").at(p).get<int>();
  }
  c.gamma = cplx_from_json(j.at("gamma"));
  return c;
}

inline json solution_to_json(const BetheSolution& sol) {
  json t = json::array();
  for (const cplx& ti : sol.state.t) t.push_back(to_json(ti));
  return json{{"t", t},
              {"k", to_json(sol.state.k)},
              {"q", to_json(sol.q)},
              {"eigenvalue", to_json(sol.eigenvalue)},
              {"residual", sol.residual_norm},
              {"certificate", sol.certificate}};
}

inline BetheSolution solution_from_json(const json& j) {
  BetheSolution sol;
  for (const auto& ti : j.at("t")) sol.state.t.push_back(cplx_from_json(ti));
  sol.state.k = cplx_from_json(j.at("k"));
  sol.q = cplx_from_json(j.at("q"));
  sol.eigenvalue = cplx_from_json(j.at("eigenvalue"));
  sol.residual_norm = j.at("residual").get<double>();
  sol.certificate = j.at("certificate").get<double>();
  return sol;
}

inline json sample_to_json(const CurveSample& s) {
  json t = json::array();
  for (const cplx& ti : s.state.t) t.push_back(to_json(ti));
  return json{{"q", to_json(s.q)},
              {"t", t},
              {"k", to_json(s.state.k)},
              {"eigenvalue", to_json(s.eigenvalue)},
              {"residual", s.residual_norm},
              {"certificate", s.certificate},
              {"arc_index", s.arc_index},
              {"branch_id", s.branch_id},
              {"eigen_sign", s.eigen_sign},
              {"excluded", s.excluded_flag}};
}

inline CurveSample sample_from_json(const json& j) {
  CurveSample s;
  s.q = cplx_from_json(j.at("q"));
  for (const auto& ti : j.at("t")) s.state.t.push_back(cplx_from_json(ti));
  s.state.k = cplx_from_json(j.at("k"));
  s.eigenvalue = cplx_from_json(j.at("eigenvalue"));
  s.residual_norm = j.at("residual").get<double>();
  s.certificate = j.at("certificate").get<double>();
  s.arc_index = j.at("arc_index").get<int>();
  s.branch_id = j.at("branch_id").get<int>();
  s.eigen_sign = j.value("eigen_sign", 1);
  s.excluded_flag = j.value("excluded", false);
  return s;
}

enum class CurveFormat { Csv, Json };

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// CSV columns: q_re,q_im,t1_re,t1_im,...,tm_re,tm_im,k_re,k_im,eps_re,eps_im,
/// residual,certificate,branch_id. JSON: array of sample records.
inline std::string export_curve(const std::vector<CurveSample>& samples, CurveFormat format) {
  if (samples.empty()) throw FormatError("export_curve: empty sample list");
  const std::size_t m = samples.front().state.t.size();
  for (const auto& s : samples)
    if (s.state.t.size() != m)
      throw FormatError("export_curve: inconsistent number of t parameters across samples");
  if (format == CurveFormat::Json) {
    json arr = json::array();
    for (const auto& s : samples) arr.push_back(sample_to_json(s));
    return arr.dump(2) + "\n";
  }
  std::string out = "q_re,q_im";
  for (std::size_t i = 1; i <= m; ++i)
    out += ",t" + std::to_string(i) + "_re,t" + std::to_string(i) + "_im";
  out += ",k_re,k_im,eps_re,eps_im,residual,certificate,branch_id\n";
  for (const auto& s : samples) {
    out += detail::fmt_double(s.q.real()) + "," + detail::fmt_double(s.q.imag());
    for (const cplx& ti : s.state.t)
      out += "," + detail::fmt_double(ti.real()) + "," + detail::fmt_double(ti.imag());
    out += "," + detail::fmt_double(s.state.k.real()) + "," +
           detail::fmt_double(s.state.k.imag());
    out += "," + detail::fmt_double(s.eigenvalue.real()) + "," +
           detail::fmt_double(s.eigenvalue.imag());
    out += "," + detail::fmt_double(s.residual_norm) + "," +
           detail::fmt_double(s.certificate) + "," + std::to_string(s.branch_id) + "\n";
  }
  return out;
}

inline std::vector<CurveSample> import_curve(const std::string& text, CurveFormat format) {
  std::vector<CurveSample> samples;
  if (format == CurveFormat::Json) {
    const json arr = json::parse(text);
    if (!arr.is_array() || arr.empty()) throw FormatError("import_curve: expected a JSON array");
    for (const auto& rec : arr) samples.push_back(sample_from_json(rec));
    return samples;
  }
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
    if (!line.empty()) lines.push_back(line);
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  if (lines.size() < 2) throw FormatError("import_curve: no data rows");
  const std::size_t ncols = std::count(lines[0].begin(), lines[0].end(), ',') + 1;
  if (ncols < 9 || (ncols - 9) % 2 != 0)
    throw FormatError("import_curve: malformed CSV header");
  const std::size_t m = (ncols - 9) / 2;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    std::vector<double> vals;
    const std::string& line = lines[r];
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t comma = line.find(',', start);
      const std::string tok =
          line.substr(start, comma == std::string::npos ? comma : comma - start);
      double v = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc())
        throw FormatError("import_curve: bad number '" + tok + "' in row " + std::to_string(r));
      vals.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (vals.size() != ncols)
      throw FormatError("import_curve: row " + std::to_string(r) + " has " +
                        std::to_string(vals.size()) + " fields, expected " +
                        std::to_string(ncols));
    CurveSample s;
    s.q = {vals[0], vals[1]};
    for (std::size_t i = 0; i < m; ++i) s.state.t.push_back({vals[2 + 2 * i], vals[3 + 2 * i]});
    const std::size_t base = 2 + 2 * m;
    s.state.k = {vals[base], vals[base + 1]};
    s.eigenvalue = {vals[base + 2], vals[base + 3]};
    s.residual_norm = vals[base + 4];
    s.certificate = vals[base + 5];
    s.branch_id = int(vals[base + 6]);
    s.arc_index = int(r) - 1;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace bc1
