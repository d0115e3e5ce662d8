// Acceptance run: one PASS/FAIL line per criterion. Each check also yields a
// deterministic JSON report; the last criterion reruns the others and
// compares the report bytes. An optional argument names a directory that
// receives the combined report.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "oracle.hpp"
#include "pcrsim/analysis.hpp"
#include "pcrsim/codes.hpp"
#include "pcrsim/construct.hpp"
#include "pcrsim/serialize.hpp"

namespace {

using namespace pcrsim;
using fixed::FixedVector;
using fixed::Precision;
using nlohmann::json;

struct Outcome {
  bool pass = false;
  std::string summary;  // printed after PASS/FAIL
  json report;          // compared byte for byte across runs
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

Outcome rounding_identities() {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  o.pass = true;
  json rows = json::array();
  for (int s = 2; s <= 8; ++s) {
    for (const auto& id : construct::cell_identities(Precision(s))) {
      rows.push_back({{"s", s}, {"identity", id.name}, {"lhs", id.lhs}, {"rhs", id.rhs}, {"holds", id.holds}});
      o.pass = o.pass && id.holds;
    }
  }
  const bool fast = seconds_since(t0) < 1.0;
  o.pass = o.pass && rows.size() == 42 && fast;
  o.report = {{"identities", rows}};
  o.summary = std::to_string(rows.size()) + " identity checks over s=2..8" + (fast ? "" : ", over 1 s");
  return o;
}

Outcome parity_cell() {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  o.pass = true;
  std::size_t strings = 0, mismatches = 0;
  json per_s = json::array();
  for (int s = 2; s <= 8; ++s) {
    const Precision p(s);
    const auto c = construct::parity_cell_params(p);
    const bool z_fixes = construct::apply_macro_update(c.p0, construct::Macro::kZ, p) == c.p0 &&
                         construct::apply_macro_update(c.p1, construct::Macro::kZ, p) == c.p1;
    const auto gf = [&](const FixedVector& x) {
      return construct::apply_macro_update(construct::apply_macro_update(x, construct::Macro::kG, p),
                                           construct::Macro::kF, p);
    };
    const bool gf_swaps = gf(c.p0) == c.p1 && gf(c.p1) == c.p0;
    std::size_t bad = 0, count = 0;
    for (std::size_t len = 0; len <= 12; ++len) {
      for (std::uint64_t t = 0; t < (std::uint64_t{1} << len); ++t) {
        const auto y = pcr::table_from_index(t, len);
        if (construct::macro_trajectory(y, p) != (pcr::parity(y) ? c.p1 : c.p0)) ++bad;
        ++count;
      }
    }
    strings = count;
    mismatches += bad;
    o.pass = o.pass && z_fixes && gf_swaps && bad == 0;
    per_s.push_back({{"s", s}, {"strings", count}, {"mismatches", bad}, {"z_fixes", z_fixes}, {"gf_swaps", gf_swaps}});
  }
  const bool fast = seconds_since(t0) < 60.0;
  o.pass = o.pass && strings == (1u << 13) - 1 && fast;
  o.report = {{"per_precision", per_s}};
  o.summary = std::to_string(strings) + " strings (lengths 0..12) x 7 precisions, " + std::to_string(mismatches) +
              " mismatches";
  return o;
}

// Normalized +-1 interleaved vectors go through the same score and softmax
// kernels as a GA head.
FixedVector selection_weights(const codes::Word& query, const std::vector<const codes::Word*>& keys, Precision p) {
  const auto q = fixed::rmsnorm_s(codes::interleave_query(query, p));
  FixedVector z(p, keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i)
    z.set_numerator(i, fixed::score_s(q, fixed::rmsnorm_s(codes::interleave_key(*keys[i], p))).numerator());
  return fixed::softmax_s(z);
}

Outcome hard_selection() {
  const Precision p(2);
  Outcome o;
  o.pass = true;
  json rows = json::array();
  for (std::size_t n : {1, 4, 16, 64}) {
    const auto h = construct::build_hybrid(n, p, 1);
    const auto& words = h.code.words();
    std::size_t one_hot = 0, all_zero = 0, probes = 0;
    // Kernel level: every codeword as query against the whole table, then
    // against the table without its match.
    for (std::size_t qi = 0; qi < words.size(); ++qi) {
      std::vector<const codes::Word*> all, others;
      for (std::size_t ki = 0; ki < words.size(); ++ki) {
        all.push_back(&words[ki]);
        if (ki != qi) others.push_back(&words[ki]);
      }
      FixedVector want(p, all.size());
      want.set_numerator(qi, p.unit());
      if (selection_weights(words[qi], all, p) == want) ++one_hot;
      if (selection_weights(words[qi], others, p) == FixedVector(p, others.size())) ++all_zero;
      ++probes;
    }
    // In the decoder: both GA layers put weight 1 on the single matching
    // position for every query index j.
    std::size_t in_model = 0;
    pcr::Bits y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = (i * 7 + 3) % 5 < 2;
    for (std::size_t j = 1; j <= n; ++j) {
      nn::ForwardTrace trace;
      nn::decoder_forward(h.spec, construct::prompt_tokens(h.spec.vocab, pcr::PcrInstance{y, j}), &trace);
      FixedVector want1(p, 3 * n), want2(p, 3 * n);
      want1.set_numerator(2 * n + j - 1, p.unit());
      want2.set_numerator(2 * j - 2, p.unit());
      if (trace.last_position_weights[1][0] == want1 && trace.last_position_weights[2][0] == want2) ++in_model;
    }
    const bool ok = one_hot == probes && all_zero == probes && in_model == n;
    o.pass = o.pass && ok;
    rows.push_back({{"n", n},
                    {"m", h.code.m()},
                    {"min_distance", h.code.min_distance()},
                    {"queries", probes},
                    {"one_hot", one_hot},
                    {"all_zero_without_match", all_zero},
                    {"decoder_positions_checked", n},
                    {"decoder_one_hot", in_model}});
  }
  o.report = {{"s", 2}, {"seed", 1}, {"codes", rows}};
  o.summary = "s=2, n in {1,4,16,64}: one-hot on match, zeros without";
  return o;
}

Outcome end_to_end() {
  Outcome o;
  o.pass = true;
  json rows = json::array();
  std::size_t decodes = 0, failures = 0, scratch = 0;
  for (int s : {2, 3}) {
    for (std::size_t n = 1; n <= 8; ++n) {
      const auto spec = construct::build_hybrid_decoder(n, Precision(s), 7);
      const auto rep = analysis::exhaustive_verify(spec, n, 0, workers());
      decodes += rep.total;
      failures += rep.failures.size();
      scratch = std::max(scratch, rep.max_scratch);
      o.pass = o.pass && rep.passed() && rep.total == (n << n);
      json r = rep.to_json();
      r["d_model"] = spec.d_model;
      rows.push_back(r);
    }
  }
  o.pass = o.pass && scratch == 0;
  o.report = {{"seed", 7}, {"budget", 0}, {"reports", rows}};
  o.summary = std::to_string(decodes) + " decodes, " + std::to_string(failures) + " failures, max scratch " +
              std::to_string(scratch);
  return o;
}

Outcome dimension_scaling() {
  const Precision p(2);
  std::vector<double> xs, ys;
  json rows = json::array();
  for (std::size_t n : {4, 16, 64, 256, 1024}) {
    const auto h = construct::build_hybrid(n, p, 1);
    xs.push_back(std::log2(static_cast<double>(n)));
    ys.push_back(static_cast<double>(h.spec.d_model));
    rows.push_back({{"n", n}, {"m", h.code.m()}, {"d_model", h.spec.d_model}});
  }
  // Least squares, then lift the intercept so the line bounds every point.
  const double k = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double b = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  double a = (sy - b * sx) / k;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ss_res += std::pow(ys[i] - (a + b * xs[i]), 2);
    ss_tot += std::pow(ys[i] - sy / k, 2);
  }
  const double r2 = ss_tot == 0 ? 1 : 1 - ss_res / ss_tot;
  for (std::size_t i = 0; i < xs.size(); ++i) a = std::max(a, ys[i] - b * xs[i]);
  // The fit must be close to linear in log n; a superlogarithmic d_M would
  // bend it.
  Outcome o;
  o.pass = b > 0 && r2 >= 0.99;
  char buf[128];
  std::snprintf(buf, sizeof buf, "d_M <= %.1f + %.1f log2 n, R^2 = %.4f", a, b, r2);
  o.summary = buf;
  o.report = {{"s", 2}, {"seed", 1}, {"points", rows}, {"a", a}, {"b", b}, {"r_squared", r2}};
  return o;
}

bool oracle_separation(std::size_t m, int s) {
  using oracle::Real;
  const auto z = oracle::round_to_grid(-boost::multiprecision::sqrt(Real(2 * m)) / 3, s);
  return oracle::round_to_grid(boost::multiprecision::exp(oracle::grid_value(z, s)), s) == 0;
}

Outcome m0_value() {
  const int s = 2;
  std::size_t scan = 1;
  while (!oracle_separation(scan, s)) ++scan;
  const std::size_t m0 = codes::compute_m0(Precision(s));
  bool holds = true;
  for (std::size_t m = m0; m <= codes::m0_horizon(m0); ++m)
    holds = holds && oracle_separation(m, s) && codes::separation_holds(m, Precision(s));
  Outcome o;
  o.pass = m0 == scan && holds;
  o.summary = "m0(2) = " + std::to_string(m0) + ", oracle scan " + std::to_string(scan) + ", condition holds to " +
              std::to_string(codes::m0_horizon(m0));
  o.report = {{"s", s}, {"m0", m0}, {"oracle_m0", scan}, {"holds_to_horizon", holds}};
  return o;
}

Outcome census() {
  const Precision p(2);
  Outcome o;
  const auto spec = construct::build_parity_only_decoder(3, p);
  const auto rep = analysis::state_census(spec, 3);
  std::size_t confirmed = 0;
  for (const auto& w : rep.witnesses) confirmed += analysis::execute_witness(spec, w).confirmed() ? 1 : 0;
  const bool witnesses_ok = !rep.witnesses.empty() && confirmed == rep.witnesses.size();

  // Bound violation against exhaustive failures over several pure GDN
  // decoders: the parity cell alone and the GDN layer of the hybrid.
  json sweep = json::array();
  std::size_t violations = 0, implied = 0, converse_gaps = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    const auto hyb = nn::strip_layers(construct::build_hybrid_decoder(n, p, 1), nn::LayerKind::kGa);
    for (const auto* d : {&spec, &hyb}) {
      const auto sized = d == &spec ? construct::build_parity_only_decoder(n, p) : hyb;
      const auto c = analysis::state_census(sized, n);
      const auto v = analysis::exhaustive_verify(sized, n, 0, workers());
      const bool violated = !c.states_bound_holds();
      if (violated) {
        ++violations;
        if (!v.passed()) ++implied;
      } else if (!v.passed()) {
        ++converse_gaps;
      }
      sweep.push_back({{"decoder", sized.label},
                       {"n", n},
                       {"states", c.distinct_states()},
                       {"bound_violated", violated},
                       {"failures", v.failures.size()}});
    }
  }
  o.pass = witnesses_ok && violations > 0 && implied == violations;
  o.summary = std::to_string(rep.distinct_states()) + " states at n=3, " + std::to_string(confirmed) + "/" +
              std::to_string(rep.witnesses.size()) + " witnesses confirmed; violation implied failure in " +
              std::to_string(implied) + "/" + std::to_string(violations) + " cases (" +
              std::to_string(converse_gaps) + " failing runs within the bound)";
  o.report = {{"census", rep.to_json()}, {"witnesses_confirmed", confirmed}, {"bound_sweep", sweep}};
  return o;
}

Outcome ga_probe() {
  const std::size_t r = 8;
  const auto ga = nn::strip_layers(construct::build_hybrid_decoder(r + 1, Precision(2), 1), nn::LayerKind::kGdn);
  const auto rep = analysis::ga_parity_probe(ga, r, 0);
  Outcome o;
  o.pass = !rep.passed();
  o.summary = std::to_string(rep.failures.size()) + "/" + std::to_string(rep.total) + " parity projections wrong";
  o.report = rep.to_json();
  return o;
}

using Check = std::function<Outcome()>;

const std::vector<std::pair<std::string, Check>>& checks() {
  static const std::vector<std::pair<std::string, Check>> list = {
      {"rounding identities", rounding_identities}, {"parity cell", parity_cell},
      {"hard selection", hard_selection},           {"hybrid exhaustive", end_to_end},
      {"dimension scaling", dimension_scaling},     {"m0", m0_value},
      {"state census", census},                     {"pure GA probe", ga_probe}};
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  bool all = true;
  json first = json::array();
  std::vector<Outcome> outcomes;
  for (std::size_t i = 0; i < checks().size(); ++i) {
    Outcome o;
    try {
      o = checks()[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("exception: ") + e.what();
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << checks()[i].first << ": " << o.summary
              << std::endl;
    all = all && o.pass;
    first.push_back({{"criterion", i + 1}, {"name", checks()[i].first}, {"pass", o.pass}, {"report", o.report}});
  }

  json second = json::array();
  for (std::size_t i = 0; i < checks().size(); ++i) {
    Outcome o;
    try {
      o = checks()[i].second();
    } catch (const std::exception& e) {
      o.summary = e.what();
    }
    second.push_back({{"criterion", i + 1}, {"name", checks()[i].first}, {"pass", o.pass}, {"report", o.report}});
  }
  const std::string a = pcrsim::dump_json(first), b = pcrsim::dump_json(second);
  const bool same = a == b;
  std::cout << (same ? "PASS" : "FAIL") << " 9 determinism: second run of 1-8 "
            << (same ? "byte-identical" : "differs") << " (" << a.size() << " bytes)" << std::endl;
  all = all && same;

  if (argc > 1) {
    std::filesystem::create_directories(argv[1]);
    std::ofstream(std::filesystem::path(argv[1]) / "acceptance_report.json", std::ios::binary) << a;
  }
  return all ? 0 : 1;
}
