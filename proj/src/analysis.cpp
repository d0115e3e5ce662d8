#include "pcrsim/analysis.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "pcrsim/construct.hpp"

namespace pcrsim::analysis {

using nlohmann::json;
using pcr::Bits;
using pcr::PcrInstance;

namespace {

const char* answer_name(bool yes) { return yes ? "YES" : "NO"; }

std::uint64_t pack_bits(const Bits& b) {
  std::uint64_t x = 0;
  for (auto v : b) x = (x << 1) | v;
  return x;
}

struct InstanceResult {
  bool ok = true;
  Failure failure;
  std::size_t scratch = 0;
};

InstanceResult run_instance(const nn::DecoderSpec& spec, const PcrInstance& inst, std::size_t budget) {
  const bool truth = pcr::ground_truth(inst);
  const auto tokens = construct::prompt_tokens(spec.vocab, inst);
  InstanceResult r;
  try {
    const auto t = nn::greedy_decode(spec, tokens, budget);
    r.scratch = t.scratch_tokens.size();
    if (t.answer != (truth ? nn::Answer::kYes : nn::Answer::kNo)) {
      r.ok = false;
      r.failure = {inst, truth, nn::to_string(t.answer), r.scratch};
    }
  } catch (const NonScratchNonAnswerEmission&) {
    // Replay to name the offending token; the decoder is deterministic.
    auto seq = tokens;
    std::size_t scratch = 0;
    for (;;) {
      const auto next = nn::argmax_token(nn::decoder_forward(spec, seq));
      if (!spec.vocab.is_scratch(next)) {
        r.ok = false;
        r.failure = {inst, truth, "INVALID:" + spec.vocab.name(next), scratch};
        r.scratch = scratch;
        break;
      }
      seq.push_back(next);
      ++scratch;
    }
  }
  return r;
}

// Runs fn(t) for t in [0, count) on `jobs` threads and returns the per-index
// results in index order.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(std::size_t count, std::size_t jobs, Fn fn) {
  std::vector<Result> out(count);
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t t = 0; t < count; ++t) out[t] = fn(t);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t t = w; t < count; t += jobs) out[t] = fn(t);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

void finish(VerificationReport& rep, const std::vector<std::vector<InstanceResult>>& per_table) {
  for (const auto& rs : per_table) {
    for (const auto& r : rs) {
      ++rep.total;
      rep.max_scratch = std::max(rep.max_scratch, r.scratch);
      if (!r.ok) rep.failures.push_back(r.failure);
    }
  }
}

}  // namespace

json VerificationReport::to_json(bool include_timing) const {
  json fails = json::array();
  for (const auto& f : failures) {
    fails.push_back({{"instance", f.instance.to_string()},
                     {"expected", answer_name(f.expected)},
                     {"got", f.got},
                     {"scratch", f.scratch}});
  }
  json out = {{"kind", "verification"},
              {"mode", mode},
              {"decoder", decoder},
              {"n", n},
              {"s", s},
              {"budget", budget},
              {"total", total},
              {"passed", passed()},
              {"failure_count", failures.size()},
              {"max_scratch", max_scratch},
              {"failures", fails}};
  if (include_timing) out["wall_seconds"] = wall_seconds;
  return out;
}

std::string VerificationReport::to_csv() const {
  std::ostringstream out;
  out << "mode,decoder,n,s,budget,total,failure_count,max_scratch,instance,expected,got,scratch\n";
  const auto prefix = [&] {
    out << mode << ',' << decoder << ',' << n << ',' << s << ',' << budget << ',' << total << ','
        << failures.size() << ',' << max_scratch << ',';
  };
  if (failures.empty()) {
    prefix();
    out << ",,,\n";
  }
  for (const auto& f : failures) {
    prefix();
    out << f.instance.to_string() << ',' << answer_name(f.expected) << ',' << f.got << ','
        << f.scratch << '\n';
  }
  return out.str();
}

VerificationReport exhaustive_verify(const nn::DecoderSpec& spec, std::size_t n, std::size_t budget,
                                     std::size_t jobs) {
  if (n == 0 || n > 20) throw DimensionMismatch("exhaustive verification needs 1 <= n <= 20");
  if (spec.max_context() < 3 * n + budget) {
    throw ContextOverflow("decoder context " + std::to_string(spec.max_context()) + " is below 3n + budget");
  }
  const auto start = std::chrono::steady_clock::now();
  VerificationReport rep;
  rep.decoder = spec.label;
  rep.mode = "exhaustive";
  rep.n = n;
  rep.s = spec.precision.bits();
  rep.budget = budget;
  const auto per_table = parallel_map<std::vector<InstanceResult>>(std::size_t{1} << n, jobs, [&](std::size_t t) {
    std::vector<InstanceResult> rs;
    PcrInstance inst{pcr::table_from_index(t, n), 1};
    for (std::size_t j = 1; j <= n; ++j) {
      inst.j = j;
      rs.push_back(run_instance(spec, inst, budget));
    }
    return rs;
  });
  finish(rep, per_table);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// ---------------------------------------------------------------------------

bool CensusReport::states_bound_holds() const {
  return n == 0 || distinct_states() >= (std::size_t{1} << (n - 1));
}

bool CensusReport::realized_bound_holds() const {
  if (realized_alphabet <= 1) return required_log2() <= 0;
  return static_cast<double>(state_scalars) * std::log2(static_cast<double>(realized_alphabet)) >= required_log2();
}

bool CensusReport::format_bound_holds() const {
  return static_cast<double>(state_scalars) * std::log2(static_cast<double>(format_alphabet)) >= required_log2();
}

json CensusReport::to_json() const {
  json ws = json::array();
  for (const auto& w : witnesses) {
    ws.push_back({{"first", PcrInstance{w.y, w.j}.to_string()}, {"second", PcrInstance{w.y_prime, w.j}.to_string()}});
  }
  return {{"kind", "census"},
          {"decoder", decoder},
          {"n", n},
          {"s", s},
          {"tables", tables},
          {"distinct_states", distinct_states()},
          {"required_states", std::size_t{1} << (n - 1)},
          {"distinct_response_vectors", distinct_response_vectors},
          {"class_sizes", class_sizes},
          {"state_scalars", state_scalars},
          {"alphabet",
           {{"realized", realized_alphabet},
            {"format", format_alphabet},
            {"realized_bound_holds", realized_bound_holds()},
            {"format_bound_holds", format_bound_holds()}}},
          {"states_bound_holds", states_bound_holds()},
          {"witness_count", witnesses.size()},
          {"witnesses", ws}};
}

std::string CensusReport::to_csv() const {
  std::ostringstream out;
  out << "decoder,n,s,tables,distinct_states,required_states,state_scalars,realized_alphabet,format_alphabet,"
         "witness,first,second\n";
  const auto prefix = [&] {
    out << decoder << ',' << n << ',' << s << ',' << tables << ',' << distinct_states() << ','
        << (std::size_t{1} << (n - 1)) << ',' << state_scalars << ',' << realized_alphabet << ',' << format_alphabet
        << ',';
  };
  if (witnesses.empty()) {
    prefix();
    out << ",,\n";
  }
  for (std::size_t i = 0; i < witnesses.size(); ++i) {
    prefix();
    const auto& w = witnesses[i];
    out << i << ',' << PcrInstance{w.y, w.j}.to_string() << ',' << PcrInstance{w.y_prime, w.j}.to_string() << '\n';
  }
  return out.str();
}

CensusReport state_census(const nn::DecoderSpec& spec, std::size_t n) {
  if (!spec.is_pure_gdn()) throw NotPureGdn("state census requires a pure GDN decoder");
  if (n == 0 || n > 20) throw DimensionMismatch("state census needs 1 <= n <= 20");
  if (spec.max_context() < 2 * n) throw ContextOverflow("decoder context is below the table length");

  CensusReport rep;
  rep.decoder = spec.label;
  rep.n = n;
  rep.s = spec.precision.bits();
  rep.tables = std::size_t{1} << n;
  rep.state_scalars = spec.recurrent_scalar_count();
  rep.format_alphabet = spec.precision.format_size();
  rep.class_of_table.resize(rep.tables);

  const nn::TokenId zero = spec.vocab.id("0"), one = spec.vocab.id("1");
  std::map<std::vector<std::int64_t>, std::uint32_t> classes;
  std::set<std::int64_t> values;

  // Depth-first over table prefixes so shared prefixes are scanned once; bit
  // 0 before bit 1 keeps lexicographic table order.
  struct Frame {
    nn::GdnScanner scan;
    std::size_t depth;
    std::uint64_t index;
  };
  std::vector<Frame> stack;
  stack.push_back({nn::GdnScanner(spec), 0, 0});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    if (f.depth == n) {
      auto fp = f.scan.fingerprint();
      auto [it, fresh] = classes.emplace(std::move(fp), static_cast<std::uint32_t>(rep.class_sizes.size()));
      if (fresh) {
        rep.class_sizes.push_back(0);
        values.insert(it->first.begin(), it->first.end());
      }
      ++rep.class_sizes[it->second];
      rep.class_of_table[f.index] = it->second;
      continue;
    }
    for (int b = 1; b >= 0; --b) {
      Frame child{f.scan, f.depth + 1, (f.index << 1) | static_cast<std::uint64_t>(b)};
      const nn::TokenId tok = b ? one : zero;
      child.scan.push(tok);
      child.scan.push(tok);
      stack.push_back(std::move(child));
    }
  }
  rep.realized_alphabet = values.size();

  std::set<std::uint64_t> responses;
  std::vector<std::int64_t> first(rep.class_sizes.size(), -1);
  std::vector<bool> done(rep.class_sizes.size(), false);
  for (std::uint64_t t = 0; t < rep.tables; ++t) {
    const Bits y = pcr::table_from_index(t, n);
    const Bits r = pcr::response_vector(y);
    responses.insert(pack_bits(r));
    const auto c = rep.class_of_table[t];
    if (first[c] < 0) {
      first[c] = static_cast<std::int64_t>(t);
      continue;
    }
    if (done[c]) continue;
    const Bits y0 = pcr::table_from_index(static_cast<std::uint64_t>(first[c]), n);
    const Bits r0 = pcr::response_vector(y0);
    if (r0 == r) continue;
    std::size_t j = 0;
    while (r0[j] == r[j]) ++j;
    rep.witnesses.push_back({y0, y, j + 1});
    done[c] = true;
  }
  rep.distinct_response_vectors = responses.size();
  return rep;
}

WitnessCheck execute_witness(const nn::DecoderSpec& spec, const Witness& w, std::size_t budget) {
  const PcrInstance a{w.y, w.j}, b{w.y_prime, w.j};
  WitnessCheck c;
  c.answer = nn::greedy_decode(spec, construct::prompt_tokens(spec.vocab, a), budget).answer;
  c.answer_prime = nn::greedy_decode(spec, construct::prompt_tokens(spec.vocab, b), budget).answer;
  c.truth = pcr::ground_truth(a);
  c.truth_prime = pcr::ground_truth(b);
  return c;
}

VerificationReport ga_parity_probe(const nn::DecoderSpec& spec, std::size_t r, std::size_t budget) {
  if (!spec.is_pure_ga()) throw NotPureGa("parity probe requires a pure GA decoder");
  if (r > 20) throw DimensionMismatch("parity probe needs r <= 20");
  const std::size_t n = r + 1;
  if (spec.max_context() < 3 * n + budget) throw ContextOverflow("decoder context is below 3(r + 1) + budget");
  const auto start = std::chrono::steady_clock::now();
  VerificationReport rep;
  rep.decoder = spec.label;
  rep.mode = "ga-parity-probe";
  rep.n = n;
  rep.s = spec.precision.bits();
  rep.budget = budget;
  std::vector<std::vector<InstanceResult>> per_table;
  for (std::uint64_t t = 0; t < (std::uint64_t{1} << r); ++t) {
    per_table.push_back({run_instance(spec, pcr::parity_projection(pcr::table_from_index(t, r)), budget)});
  }
  finish(rep, per_table);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace pcrsim::analysis
