#include "pcrsim/serialize.hpp"

namespace pcrsim {

using nlohmann::json;
using namespace nn;

namespace {

json sparse_to_json(const SparseVector& v) {
  json out = json::array();
  for (const auto& [c, k] : v) out.push_back({c, k});
  return out;
}

json affine_to_json(const AffineMap& m) {
  json weights = json::array();
  json bias = json::array();
  for (std::size_t r = 0; r < m.out_dim(); ++r) {
    for (const auto& [c, k] : m.row(r)) weights.push_back({r, c, k});
    if (m.bias_numerator(r) != 0) bias.push_back({r, m.bias_numerator(r)});
  }
  return {{"in", m.in_dim()}, {"out", m.out_dim()}, {"weights", weights}, {"bias", bias}};
}

const json& field(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  return obj.at(key);
}

template <typename T>
T get(const json& obj, const char* key) {
  try {
    return field(obj, key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad field '") + key + "': " + e.what());
  }
}

AffineMap affine_from_json(const json& j, Precision p) {
  AffineMap m(p, get<std::size_t>(j, "in"), get<std::size_t>(j, "out"));
  try {
    for (const auto& w : field(j, "weights"))
      m.set_weight_numerator(w.at(0).get<std::size_t>(), w.at(1).get<std::size_t>(), w.at(2).get<std::int64_t>());
    for (const auto& b : field(j, "bias")) m.set_bias_numerator(b.at(0).get<std::size_t>(), b.at(1).get<std::int64_t>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad affine map: ") + e.what());
  }
  return m;
}

json matrix_to_json(const FixedMatrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto v = m.row(r);
    rows.push_back(std::vector<std::int64_t>(v.numerators().begin(), v.numerators().end()));
  }
  return rows;
}

FixedMatrix matrix_from_json(const json& j, Precision p, std::size_t dim) {
  FixedMatrix m(p, dim, dim);
  try {
    if (j.size() != dim) throw FormatError("initial state has wrong row count");
    for (std::size_t r = 0; r < dim; ++r) {
      const auto row = j.at(r).get<std::vector<std::int64_t>>();
      if (row.size() != dim) throw FormatError("initial state has wrong column count");
      m.set_row(r, FixedVector::from_numerators(p, row));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad initial state: ") + e.what());
  }
  return m;
}

const char* activation_name(UnitActivation a) { return a == UnitActivation::kClamp ? "clamp" : "sigmoid"; }

UnitActivation activation_from(const std::string& name) {
  if (name == "clamp") return UnitActivation::kClamp;
  if (name == "sigmoid") return UnitActivation::kSigmoid;
  throw FormatError("unknown activation " + name);
}

}  // namespace

json decoder_to_json(const DecoderSpec& spec) {
  const Embedding& e = spec.embedding;
  json token = json::array();
  for (TokenId z = 0; z < spec.vocab.size(); ++z) token.push_back(sparse_to_json(e.token_row(z)));
  json position = json::array();
  for (std::size_t pos = 1; pos <= e.max_context(); ++pos) position.push_back(sparse_to_json(e.position_row(pos)));
  json joint = json::array();
  for (const auto& [key, row] : e.joint_rows())
    joint.push_back({{"token", key.first}, {"position", key.second}, {"row", sparse_to_json(row)}});

  std::vector<std::string> scratch;
  for (TokenId t : spec.vocab.scratch()) scratch.push_back(spec.vocab.name(t));

  json layers = json::array();
  for (const auto& l : spec.layers) {
    json heads = json::array();
    for (const auto& h : l.ga_heads) {
      heads.push_back({{"query", affine_to_json(h.query)},
                       {"key", affine_to_json(h.key)},
                       {"value", affine_to_json(h.value)},
                       {"gate", affine_to_json(h.gate)}});
    }
    for (const auto& h : l.gdn_heads) {
      heads.push_back({{"query", affine_to_json(h.query)},
                       {"key", affine_to_json(h.key)},
                       {"value", affine_to_json(h.value)},
                       {"alpha", affine_to_json(h.alpha)},
                       {"beta", affine_to_json(h.beta)},
                       {"gate", affine_to_json(h.gate)},
                       {"alpha_activation", activation_name(h.alpha_activation)},
                       {"beta_activation", activation_name(h.beta_activation)},
                       {"initial_state", matrix_to_json(h.initial_state)}});
    }
    layers.push_back({{"kind", to_string(l.kind)},
                      {"head_dim", l.head_dim},
                      {"heads", heads},
                      {"out_proj", affine_to_json(l.out_proj)},
                      {"mlp", {{"hidden", affine_to_json(l.mlp.hidden)}, {"output", affine_to_json(l.mlp.output)}}}});
  }

  return {{"format", kDecoderFormat},
          {"version", kDecoderFormatVersion},
          {"label", spec.label},
          {"precision", spec.precision.bits()},
          {"d_model", spec.d_model},
          {"max_context", spec.max_context()},
          {"vocabulary", spec.vocab.symbols()},
          {"yes", spec.vocab.name(spec.vocab.yes())},
          {"no", spec.vocab.name(spec.vocab.no())},
          {"scratch", scratch},
          {"embedding", {{"token", token}, {"position", position}, {"joint", joint}}},
          {"layers", layers},
          {"output", affine_to_json(spec.output)}};
}

DecoderSpec decoder_from_json(const json& doc) {
  if (get<std::string>(doc, "format") != kDecoderFormat) throw FormatError("not a decoder document");
  if (get<int>(doc, "version") != kDecoderFormatVersion) {
    throw FormatError("unsupported decoder version " + std::to_string(get<int>(doc, "version")));
  }
  const Precision p(get<int>(doc, "precision"));
  const auto d_model = get<std::size_t>(doc, "d_model");
  const auto max_context = get<std::size_t>(doc, "max_context");
  Vocabulary vocab(get<std::vector<std::string>>(doc, "vocabulary"), get<std::string>(doc, "yes"),
                   get<std::string>(doc, "no"), get<std::vector<std::string>>(doc, "scratch"));

  Embedding e(p, d_model, vocab.size(), max_context);
  const json& ej = field(doc, "embedding");
  try {
    const json& token = field(ej, "token");
    if (token.size() != vocab.size()) throw FormatError("embedding token table size differs from vocabulary");
    for (TokenId z = 0; z < token.size(); ++z)
      for (const auto& entry : token.at(z)) e.set_token(z, entry.at(0).get<std::size_t>(), entry.at(1).get<std::int64_t>());
    const json& position = field(ej, "position");
    if (position.size() != max_context) throw FormatError("embedding position table size differs from max_context");
    for (std::size_t i = 0; i < position.size(); ++i)
      for (const auto& entry : position.at(i))
        e.set_position(i + 1, entry.at(0).get<std::size_t>(), entry.at(1).get<std::int64_t>());
    for (const auto& j : field(ej, "joint")) {
      const auto z = get<TokenId>(j, "token");
      const auto pos = get<std::size_t>(j, "position");
      for (const auto& entry : field(j, "row"))
        e.set_joint(z, pos, entry.at(0).get<std::size_t>(), entry.at(1).get<std::int64_t>());
    }
  } catch (const json::exception& ex) {
    throw FormatError(std::string("bad embedding: ") + ex.what());
  }

  std::vector<LayerSpec> layers;
  for (const auto& lj : field(doc, "layers")) {
    const auto kind_name = get<std::string>(lj, "kind");
    if (kind_name != "GA" && kind_name != "GDN") throw FormatError("unknown layer kind " + kind_name);
    const LayerKind kind = kind_name == "GA" ? LayerKind::kGa : LayerKind::kGdn;
    const auto head_dim = get<std::size_t>(lj, "head_dim");
    const json& mj = field(lj, "mlp");
    LayerSpec l{kind,
                head_dim,
                {},
                {},
                affine_from_json(field(lj, "out_proj"), p),
                MlpParams{affine_from_json(field(mj, "hidden"), p), affine_from_json(field(mj, "output"), p)}};
    for (const auto& hj : field(lj, "heads")) {
      if (kind == LayerKind::kGa) {
        l.ga_heads.push_back({affine_from_json(field(hj, "query"), p), affine_from_json(field(hj, "key"), p),
                              affine_from_json(field(hj, "value"), p), affine_from_json(field(hj, "gate"), p)});
      } else {
        l.gdn_heads.push_back({affine_from_json(field(hj, "query"), p), affine_from_json(field(hj, "key"), p),
                               affine_from_json(field(hj, "value"), p), affine_from_json(field(hj, "alpha"), p),
                               affine_from_json(field(hj, "beta"), p), affine_from_json(field(hj, "gate"), p),
                               activation_from(get<std::string>(hj, "alpha_activation")),
                               activation_from(get<std::string>(hj, "beta_activation")),
                               matrix_from_json(field(hj, "initial_state"), p, head_dim)});
      }
    }
    layers.push_back(std::move(l));
  }

  DecoderSpec spec{p,
                   d_model,
                   std::move(vocab),
                   std::move(e),
                   std::move(layers),
                   affine_from_json(field(doc, "output"), p),
                   doc.contains("label") ? get<std::string>(doc, "label") : std::string()};
  spec.validate();
  return spec;
}

json transcript_to_json(const Transcript& t, const Vocabulary& vocab) {
  json scratch = json::array();
  for (TokenId z : t.scratch_tokens) scratch.push_back(vocab.name(z));
  return {{"scratch_tokens", scratch}, {"answer", to_string(t.answer)}, {"steps", t.steps}};
}

std::string dump_json(const json& doc) { return doc.dump(2) + "\n"; }

}  // namespace pcrsim
