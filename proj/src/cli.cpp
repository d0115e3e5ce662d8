#include "pcrsim/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pcrsim/analysis.hpp"
#include "pcrsim/codes.hpp"
#include "pcrsim/construct.hpp"
#include "pcrsim/serialize.hpp"

namespace pcrsim::cli {

using nlohmann::json;

namespace {

struct Common {
  int s = 2;
  std::uint64_t seed = 0;
  std::string format = "json";
  std::string out;
};

void add_precision(CLI::App* cmd, Common& c) {
  cmd->add_option("--s", c.s, "precision bits s")->check(CLI::Range(fixed::Precision::kMinBits, fixed::Precision::kMaxBits));
}

void add_output(CLI::App* cmd, Common& c, bool csv) {
  if (csv) cmd->add_option("--format", c.format, "report format")->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--out", c.out, "output file (default: $" + std::string(kOutDirEnv) + "/<name> or stdout)");
}

json provenance(const std::string& command, const Common& c) {
  return {{"pcrsim_version", PCRSIM_VERSION}, {"command", command}, {"s", c.s}, {"seed", c.seed}};
}

std::string csv_header(const std::string& command, const Common& c, const std::string& extra) {
  std::ostringstream h;
  h << "# pcrsim " << PCRSIM_VERSION << " command=" << command << " s=" << c.s << " seed=" << c.seed << extra << "\n";
  return h.str();
}

// Writes to --out, else to $PCRSIM_OUT_DIR/default_name, else to stdout.
void emit(const Common& c, const std::string& default_name, const std::string& body, std::ostream& out,
          std::ostream& err) {
  std::string path = c.out;
  if (path.empty()) {
    if (const char* dir = std::getenv(kOutDirEnv); dir && *dir) path = (std::filesystem::path(dir) / default_name).string();
  }
  if (path.empty()) {
    out << body;
    return;
  }
  if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << body;
  err << "wrote " << path << "\n";
}

std::string range_tag(const std::vector<std::size_t>& ns) {
  if (ns.size() == 1) return std::to_string(ns.front());
  return std::to_string(ns.front()) + "-" + std::to_string(ns.back());
}

nn::DecoderSpec load_decoder(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read decoder file " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(std::string("decoder file is not JSON: ") + e.what());
  }
  return decoder_from_json(doc);
}

}  // namespace

std::vector<std::size_t> parse_range(const std::string& text) {
  const auto number = [&](const std::string& t) -> std::size_t {
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
      throw CLI::ValidationError("--n", "expected N, A..B or a comma list, got '" + text + "'");
    }
    return std::stoul(t);
  };
  std::vector<std::size_t> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto a = number(text.substr(0, dots)), b = number(text.substr(dots + 2));
    if (a > b) throw CLI::ValidationError("--n", "empty range " + text);
    for (auto v = a; v <= b; ++v) out.push_back(v);
  } else {
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(number(part));
  }
  if (out.empty()) throw CLI::ValidationError("--n", "no values in '" + text + "'");
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bit-exact simulator for constant-precision GA/GDN decoders on Parity-Conditioned Retrieval", "pcrsim"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PCRSIM_VERSION);

  Common c;
  std::string n_text = "1";
  std::size_t budget = 0, jobs = 1, r_bits = 8;
  bool timing = false;
  std::string decoder_path, kind = "hybrid";

  auto* verify = app.add_subcommand("verify-hybrid", "build hybrid decoders and verify them on every instance");
  verify->add_option("--n", n_text, "table sizes: N, A..B or a comma list")->required();
  add_precision(verify, c);
  verify->add_option("--seed", c.seed, "code search seed");
  verify->add_option("--budget", budget, "scratch budget");
  verify->add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1, 256));
  verify->add_flag("--timing", timing, "include wall-clock seconds in the report");
  add_output(verify, c, true);

  auto* census = app.add_subcommand("census", "recurrent-state census of a pure GDN decoder");
  census->add_option("--decoder", decoder_path, "decoder JSON file")->required();
  census->add_option("--n", n_text, "table size")->required();
  add_output(census, c, true);

  auto* round_table = app.add_subcommand("round-table", "print the parity-cell rounding identities");
  add_precision(round_table, c);
  add_output(round_table, c, true);

  auto* code_search = app.add_subcommand("code-search", "compute m0(s) and write an address code table");
  add_precision(code_search, c);
  code_search->add_option("--n", n_text, "number of addresses")->required();
  code_search->add_option("--seed", c.seed, "sampling seed");
  add_output(code_search, c, false);

  auto* build = app.add_subcommand("build", "write a constructed decoder as JSON");
  build->add_option("--kind", kind, "decoder kind")->check(CLI::IsMember({"hybrid", "parity-only", "hybrid-no-gdn"}));
  build->add_option("--n", n_text, "table size")->required();
  add_precision(build, c);
  build->add_option("--seed", c.seed, "code search seed");
  add_output(build, c, false);

  auto* probe = app.add_subcommand("ga-probe", "run a pure GA decoder on parity-projected instances");
  probe->add_option("--decoder", decoder_path, "decoder JSON file (default: hybrid without its GDN layer)");
  probe->add_option("--r", r_bits, "parity length r")->check(CLI::Range(0, 20));
  add_precision(probe, c);
  probe->add_option("--seed", c.seed, "code search seed for the default decoder");
  probe->add_option("--budget", budget, "scratch budget");
  add_output(probe, c, true);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (verify->parsed()) {
      const auto ns = parse_range(n_text);
      json reports = json::array();
      std::string csv = csv_header("verify-hybrid", c, " n=" + n_text + " budget=" + std::to_string(budget));
      bool all = true;
      for (std::size_t n : ns) {
        if (n == 0) throw CLI::ValidationError("--n", "n must be at least 1");
        const auto spec = construct::build_hybrid_decoder(n, fixed::Precision(c.s), c.seed);
        const auto rep = analysis::exhaustive_verify(spec, n, budget, jobs);
        json r = rep.to_json(timing);
        r["d_model"] = spec.d_model;
        reports.push_back(r);
        csv += rep.to_csv();
        all = all && rep.passed();
      }
      json doc = provenance("verify-hybrid", c);
      doc["n"] = ns;
      doc["budget"] = budget;
      doc["passed"] = all;
      doc["reports"] = reports;
      const std::string name = "verify-hybrid-n" + range_tag(ns) + "-s" + std::to_string(c.s) + "-seed" +
                               std::to_string(c.seed) + "." + c.format;
      emit(c, name, c.format == "csv" ? csv : dump_json(doc), out, err);
      return all ? kOk : kCheckFailed;
    }

    if (census->parsed()) {
      const auto ns = parse_range(n_text);
      if (ns.size() != 1) throw CLI::ValidationError("--n", "census takes a single n");
      const auto spec = load_decoder(decoder_path);
      c.s = spec.precision.bits();
      const auto rep = analysis::state_census(spec, ns.front());
      json confirmations = json::array();
      bool all_confirmed = true;
      for (const auto& w : rep.witnesses) {
        const auto check = analysis::execute_witness(spec, w);
        all_confirmed = all_confirmed && check.confirmed();
        confirmations.push_back({{"answer", nn::to_string(check.answer)},
                                 {"answer_prime", nn::to_string(check.answer_prime)},
                                 {"confirmed", check.confirmed()}});
      }
      json doc = provenance("census", c);
      doc.erase("seed");
      doc["decoder_file"] = std::filesystem::path(decoder_path).filename().string();
      doc["report"] = rep.to_json();
      doc["report"]["witness_checks"] = confirmations;
      doc["witnesses_confirmed"] = all_confirmed;
      const std::string name = "census-" + spec.label + "-n" + std::to_string(ns.front()) + "." + c.format;
      std::string csv = "# pcrsim " + std::string(PCRSIM_VERSION) + " command=census s=" + std::to_string(c.s) +
                        " n=" + std::to_string(ns.front()) + "\n" + rep.to_csv();
      emit(c, name, c.format == "csv" ? csv : dump_json(doc), out, err);
      if (!all_confirmed) return kRuntimeError;
      return rep.witnesses.empty() ? kOk : kCheckFailed;
    }

    if (round_table->parsed()) {
      const auto ids = construct::cell_identities(fixed::Precision(c.s));
      bool all = true;
      std::ostringstream text;
      json rows = json::array();
      text << "# pcrsim " << PCRSIM_VERSION << " command=round-table s=" << c.s << "\n";
      text << "identity,lhs,rhs,holds\n";
      for (const auto& id : ids) {
        all = all && id.holds;
        text << '"' << id.name << "\",\"" << id.lhs << "\",\"" << id.rhs << "\"," << (id.holds ? "yes" : "no") << '\n';
        rows.push_back({{"identity", id.name}, {"lhs", id.lhs}, {"rhs", id.rhs}, {"holds", id.holds}});
      }
      json doc = provenance("round-table", c);
      doc.erase("seed");
      doc["identities"] = rows;
      doc["passed"] = all;
      emit(c, "round-table-s" + std::to_string(c.s) + "." + c.format,
           c.format == "csv" ? text.str() : dump_json(doc), out, err);
      return all ? kOk : kCheckFailed;
    }

    if (code_search->parsed()) {
      const auto ns = parse_range(n_text);
      if (ns.size() != 1 || ns.front() == 0) throw CLI::ValidationError("--n", "code-search takes a single n >= 1");
      const fixed::Precision p(c.s);
      const auto m0 = codes::compute_m0(p);
      const auto table = codes::build_code(ns.front(), p, c.seed);
      const bool ok = table.min_distance() >= table.required_distance();
      emit(c, "code-n" + std::to_string(ns.front()) + "-s" + std::to_string(c.s) + "-seed" + std::to_string(c.seed) + ".txt",
           table.to_text(), out, err);
      err << "m0(" << c.s << ")=" << m0 << " m=" << table.m() << " words=" << table.words().size()
          << " min_distance=" << table.min_distance() << " required=" << table.required_distance() << "\n";
      return ok ? kOk : kCheckFailed;
    }

    if (build->parsed()) {
      const auto ns = parse_range(n_text);
      if (ns.size() != 1 || ns.front() == 0) throw CLI::ValidationError("--n", "build takes a single n >= 1");
      const fixed::Precision p(c.s);
      nn::DecoderSpec spec = kind == "parity-only" ? construct::build_parity_only_decoder(ns.front(), p)
                                                   : construct::build_hybrid_decoder(ns.front(), p, c.seed);
      if (kind == "hybrid-no-gdn") spec = nn::strip_layers(spec, nn::LayerKind::kGdn);
      emit(c, spec.label + ".json", dump_json(decoder_to_json(spec)), out, err);
      return kOk;
    }

    if (probe->parsed()) {
      const fixed::Precision p(c.s);
      const nn::DecoderSpec spec =
          decoder_path.empty()
              ? nn::strip_layers(construct::build_hybrid_decoder(r_bits + 1, p, c.seed), nn::LayerKind::kGdn)
              : load_decoder(decoder_path);
      c.s = spec.precision.bits();
      const auto rep = analysis::ga_parity_probe(spec, r_bits, budget);
      json doc = provenance("ga-probe", c);
      doc["r"] = r_bits;
      doc["report"] = rep.to_json();
      doc["pass_rate"] = rep.total ? static_cast<double>(rep.total - rep.failures.size()) / rep.total : 1.0;
      emit(c, "ga-probe-r" + std::to_string(r_bits) + "-s" + std::to_string(c.s) + "." + c.format,
           c.format == "csv" ? csv_header("ga-probe", c, " r=" + std::to_string(r_bits)) + rep.to_csv()
                             : dump_json(doc),
           out, err);
      return rep.passed() ? kOk : kCheckFailed;
    }
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsage;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace pcrsim::cli
