#include "pcrsim/construct.hpp"

namespace pcrsim::construct {

using namespace nn;
using fixed::FixedScalar;
using fixed::Rational;

namespace {

AffineMap zero_map(Precision p, std::size_t in, std::size_t out) { return AffineMap(p, in, out); }

LayerSpec empty_layer(LayerKind kind, Precision p, std::size_t d_model, std::size_t head_dim) {
  LayerSpec l{kind, head_dim, {}, {}, zero_map(p, d_model, d_model),
              MlpParams{zero_map(p, d_model, 0), zero_map(p, 0, d_model)}};
  for (std::size_t a = 0; a < d_model / head_dim; ++a) {
    if (kind == LayerKind::kGa) {
      l.ga_heads.push_back({zero_map(p, d_model, head_dim), zero_map(p, d_model, head_dim),
                            zero_map(p, d_model, head_dim), zero_map(p, d_model, head_dim)});
    } else {
      l.gdn_heads.push_back({zero_map(p, d_model, head_dim), zero_map(p, d_model, head_dim),
                             zero_map(p, d_model, head_dim), zero_map(p, d_model, 1), zero_map(p, d_model, 1),
                             zero_map(p, d_model, head_dim), UnitActivation::kClamp, UnitActivation::kClamp,
                             FixedMatrix(p, head_dim, head_dim)});
    }
  }
  return l;
}

// Gate pre-activation B_s; [sigma(B_s)]_s = 1 for every s >= 2.
void open_gate(AffineMap& gate, Precision p) {
  for (std::size_t r = 0; r < gate.out_dim(); ++r) gate.set_bias_numerator(r, p.max_numerator());
}

Embedding base_embedding(const EmbeddingLayout& L, Precision p, const Vocabulary& vocab,
                         const codes::CodeTable* code) {
  const std::size_t n = L.n;
  Embedding e(p, L.d_model, vocab.size(), 3 * n + kContextHeadroom);
  const std::int64_t one = p.unit();
  e.set_token(vocab.id("0"), L.type_zero, one);
  e.set_token(vocab.id("1"), L.type_one, one);
  e.set_token(vocab.id("MARK"), L.type_mark, one);
  e.set_token(vocab.id("BLANK"), L.type_blank, one);
  for (std::size_t pos = 1; pos <= e.max_context(); ++pos) {
    const codes::Word* key = code ? &code->dummy() : nullptr;
    if (pos <= 2 * n) {
      e.set_position(pos, L.seg_table, one);
      e.set_position(pos, pos % 2 == 1 ? L.r1 : L.r2, one);
      e.set_joint(vocab.id("1"), pos, pos % 2 == 1 ? L.cell_g : L.cell_f, one);
      if (code && pos % 2 == 1) key = &code->address((pos + 1) / 2);
    } else if (pos <= 3 * n) {
      e.set_position(pos, L.seg_query, one);
      if (code) {
        const auto& addr = code->address(pos - 2 * n);
        for (std::size_t r = 0; r < L.m; ++r) e.set_position(pos, L.address + r, addr[r] * one);
      }
    }
    if (key) {
      for (std::size_t r = 0; r < L.m; ++r) e.set_position(pos, L.key_code + r, (*key)[r] * one);
    }
  }
  return e;
}

// GDN layer whose head 0 is the parity cell; its MLP turns the readout into a
// {0, 1} parity coordinate.
LayerSpec parity_layer(const EmbeddingLayout& L, Precision p) {
  const std::int64_t one = p.unit();
  LayerSpec l = empty_layer(LayerKind::kGdn, p, L.d_model, 2);
  l.gdn_heads[0] = build_parity_cell(p, L);
  l.out_proj.set_weight_numerator(L.parity_raw, 0, one);
  // parity = ReLU(raw) - ReLU(raw - 1); raw is 0 or [sqrt 2]_s >= 5/4.
  l.mlp.hidden = zero_map(p, L.d_model, 2);
  l.mlp.hidden.set_weight_numerator(0, L.parity_raw, one);
  l.mlp.hidden.set_weight_numerator(1, L.parity_raw, one);
  l.mlp.hidden.set_bias_numerator(1, -one);
  l.mlp.output = zero_map(p, 2, L.d_model);
  l.mlp.output.set_weight_numerator(L.parity, 0, one);
  l.mlp.output.set_weight_numerator(L.parity, 1, -one);
  return l;
}

// YES = source, NO = 1 - source, everything else -1.
AffineMap answer_map(const EmbeddingLayout& L, Precision p, const Vocabulary& vocab, std::size_t source) {
  const std::int64_t one = p.unit();
  AffineMap out = zero_map(p, L.d_model, vocab.size());
  for (TokenId t = 0; t < vocab.size(); ++t) out.set_bias_numerator(t, -one);
  out.set_weight_numerator(vocab.yes(), source, one);
  out.set_bias_numerator(vocab.yes(), 0);
  out.set_weight_numerator(vocab.no(), source, -one);
  out.set_bias_numerator(vocab.no(), one);
  return out;
}

}  // namespace

const char* to_string(Macro m) {
  switch (m) {
    case Macro::kZ:
      return "Z";
    case Macro::kG:
      return "G";
    case Macro::kF:
      return "F";
  }
  return "?";
}

ParityCellParams parity_cell_params(Precision p) {
  const std::int64_t u = p.unit();
  const std::int64_t kappa = fixed::sqrt_s(Rational(1, 2), p).numerator();
  return {p,
          1,
          kappa,
          {3 * u / 4, u / 4, {u, 0}, 0},
          {3 * u / 4, u / 2, {kappa, kappa}, 6},
          {u / 4, 3 * u / 4, {-kappa, kappa}, 0},
          FixedVector::from_numerators(p, {0, 1}),
          FixedVector::from_numerators(p, {1, 0}),
          FixedVector::from_numerators(p, {2, 3}),
          FixedVector::from_numerators(p, {3, 2}),
          FixedVector::from_numerators(p, {u, 0})};
}

std::vector<IdentityCheck> cell_identities(Precision p) {
  const auto c = parity_cell_params(p);
  const auto k = [p](std::int64_t v) { return FixedScalar::from_numerator(v, p); };
  const FixedScalar kappa = k(c.kappa), delta = k(1);
  std::vector<IdentityCheck> out;
  const auto check = [&](std::string name, const FixedScalar& lhs, const FixedScalar& rhs) {
    out.push_back({std::move(name), lhs.to_fraction(), rhs.to_fraction(), lhs == rhs});
  };
  check("[kappa delta]_s = delta", fixed::mul_s(kappa, delta), delta);
  check("[2 kappa delta]_s = delta", fixed::mul_s(kappa, k(2)), delta);
  check("[3 kappa delta]_s = 2 delta", fixed::mul_s(kappa, k(3)), k(2));
  check("[(1/2) delta]_s = 0", fixed::mul_s(k(p.unit() / 2), delta), k(0));
  check("[(3/4) delta]_s = delta", fixed::mul_s(k(3 * p.unit() / 4), delta), delta);
  out.push_back({"1/2 < kappa <= 3/4", kappa.to_fraction(), "(1/2, 3/4]",
                 kappa.value() > Rational(1, 2) && kappa.value() <= Rational(3, 4)});
  return out;
}

FixedVector apply_macro_update(const FixedVector& x, Macro m, Precision p) {
  if (x.size() != 2) throw DimensionMismatch("parity cell state has two coordinates");
  const MacroParams& mp = parity_cell_params(p).macro(m);
  const auto scalar = [p](std::int64_t k) { return FixedScalar::from_numerator(k, p); };
  const auto k = FixedVector::from_numerators(p, {mp.key[0], mp.key[1]});
  const FixedScalar c = fixed::mul_s(scalar(mp.beta), fixed::dot_strict(x, k));
  const FixedScalar bv = fixed::mul_s(scalar(mp.beta), scalar(mp.value));
  FixedVector out(p, 2);
  for (std::size_t b = 0; b < 2; ++b) {
    const FixedScalar w = fixed::sub_s(x[b], fixed::mul_s(c, k[b]));
    out.set(b, fixed::add_s(fixed::mul_s(scalar(mp.alpha), w), fixed::mul_s(bv, k[b])));
  }
  return out;
}

std::vector<Macro> macros_for_bits(const pcr::Bits& bits) {
  std::vector<Macro> out;
  for (auto b : bits) {
    out.push_back(b ? Macro::kG : Macro::kZ);
    out.push_back(b ? Macro::kF : Macro::kZ);
  }
  return out;
}

FixedVector macro_trajectory(const pcr::Bits& bits, Precision p) {
  FixedVector x = parity_cell_params(p).p0;
  for (Macro m : macros_for_bits(bits)) x = apply_macro_update(x, m, p);
  return x;
}

EmbeddingLayout make_layout(std::size_t n, std::size_t m, std::size_t align) {
  EmbeddingLayout L;
  L.n = n;
  L.m = m;
  std::size_t next = 0;
  for (std::size_t* c : {&L.type_zero, &L.type_one, &L.type_mark, &L.type_blank, &L.seg_table, &L.seg_query, &L.r1,
                         &L.r2, &L.cell_g, &L.cell_f, &L.parity_raw, &L.parity, &L.bit, &L.answer}) {
    *c = next++;
  }
  L.address = next;
  L.key_code = next + m;
  L.retrieved = next + 2 * m;
  const std::size_t used = next + 3 * m;
  L.d_model = (used + align - 1) / align * align;
  return L;
}

Vocabulary pcr_vocabulary() { return Vocabulary({"YES", "NO", "#", "0", "1", "MARK", "BLANK"}, "YES", "NO", {"#"}); }

std::vector<TokenId> prompt_tokens(const Vocabulary& vocab, const std::vector<pcr::Symbol>& prompt) {
  std::vector<TokenId> out;
  out.reserve(prompt.size());
  for (auto s : prompt) out.push_back(vocab.id(pcr::to_string(s)));
  return out;
}

std::vector<TokenId> prompt_tokens(const Vocabulary& vocab, const pcr::PcrInstance& inst) {
  return prompt_tokens(vocab, pcr::encode_prompt(inst));
}

std::vector<TokenId> table_tokens(const Vocabulary& vocab, const pcr::Bits& y) {
  const TokenId zero = vocab.id("0"), one = vocab.id("1");
  std::vector<TokenId> out;
  for (auto b : y) out.insert(out.end(), 2, b ? one : zero);
  return out;
}

GdnHeadParams build_parity_cell(Precision p, const EmbeddingLayout& L) {
  const std::int64_t u = p.unit();
  const std::size_t d = L.d_model;
  GdnHeadParams h{zero_map(p, d, 2), zero_map(p, d, 2), zero_map(p, d, 2),  zero_map(p, d, 1),
                  zero_map(p, d, 1), zero_map(p, d, 2), UnitActivation::kClamp, UnitActivation::kClamp,
                  FixedMatrix(p, 2, 2)};
  // Unnormalized keys (1,0), (1,1), (-1,1) for Z, G, F; l2norm gives the
  // cell keys (1,0), (kappa,kappa), (-kappa,kappa).
  h.key.set_bias_numerator(0, u);
  h.key.set_weight_numerator(1, L.cell_g, u);
  h.key.set_weight_numerator(0, L.cell_f, -2 * u);
  h.key.set_weight_numerator(1, L.cell_f, u);
  // alpha: 3/4 (Z, G), 1/4 (F). beta: 1/4 (Z), 1/2 (G), 3/4 (F).
  h.alpha.set_bias_numerator(0, 3 * u / 4);
  h.alpha.set_weight_numerator(0, L.cell_f, -u / 2);
  h.beta.set_bias_numerator(0, u / 4);
  h.beta.set_weight_numerator(0, L.cell_g, u / 4);
  h.beta.set_weight_numerator(0, L.cell_f, u / 2);
  // v = (6 delta, 0) on G only.
  h.value.set_weight_numerator(0, L.cell_g, 6);
  h.query.set_bias_numerator(0, u);
  open_gate(h.gate, p);
  h.initial_state.set(0, 1, FixedScalar::from_numerator(1, p));
  return h;
}

HybridDecoder build_hybrid(std::size_t n, Precision p, std::uint64_t seed) {
  if (n == 0) throw EmptyInput("hybrid decoder needs n >= 1");
  codes::CodeTable code = codes::build_code(n, p, seed);
  const std::size_t m = code.m();
  const EmbeddingLayout L = make_layout(n, m, 2 * m);
  const std::size_t d = L.d_model;
  const std::size_t dh = 2 * m;
  const std::int64_t one = p.unit();
  Vocabulary vocab = pcr_vocabulary();
  Embedding emb = base_embedding(L, p, vocab, &code);

  // First GA layer: fixed query E(MARK); keys by token type; values carry the
  // query-offset address into the retrieved slot.
  LayerSpec ga1 = empty_layer(LayerKind::kGa, p, d, dh);
  {
    GaHeadParams& h = ga1.ga_heads[0];
    const std::pair<std::size_t, const codes::Word*> key_of_type[] = {{L.type_zero, &code.dummy()},
                                                                      {L.type_one, &code.dummy()},
                                                                      {L.type_mark, &code.mark()},
                                                                      {L.type_blank, &code.blank()}};
    for (std::size_t r = 0; r < m; ++r) {
      h.query.set_bias_numerator(2 * r, code.mark()[r] * one);
      h.query.set_bias_numerator(2 * r + 1, one);
      for (const auto& [coord, word] : key_of_type) h.key.set_weight_numerator(2 * r, coord, (*word)[r] * one);
      h.key.set_bias_numerator(2 * r + 1, -one);
      h.value.set_weight_numerator(r, L.address + r, one);
      ga1.out_proj.set_weight_numerator(L.retrieved + r, r, one);
    }
    open_gate(h.gate, p);
  }

  // Second GA layer: query = retrieved address, keys from the key-code slot,
  // value = "this token is 1"; the MLP computes bit xor parity.
  LayerSpec ga2 = empty_layer(LayerKind::kGa, p, d, dh);
  {
    GaHeadParams& h = ga2.ga_heads[0];
    for (std::size_t r = 0; r < m; ++r) {
      h.query.set_weight_numerator(2 * r, L.retrieved + r, one);
      h.query.set_bias_numerator(2 * r + 1, one);
      h.key.set_weight_numerator(2 * r, L.key_code + r, one);
      h.key.set_bias_numerator(2 * r + 1, -one);
    }
    h.value.set_weight_numerator(0, L.type_one, one);
    open_gate(h.gate, p);
    ga2.out_proj.set_weight_numerator(L.bit, 0, one);
    // answer = ReLU(parity + bit) - 2 ReLU(parity + bit - 1)
    ga2.mlp.hidden = zero_map(p, d, 2);
    for (std::size_t r = 0; r < 2; ++r) {
      ga2.mlp.hidden.set_weight_numerator(r, L.parity, one);
      ga2.mlp.hidden.set_weight_numerator(r, L.bit, one);
    }
    ga2.mlp.hidden.set_bias_numerator(1, -one);
    ga2.mlp.output = zero_map(p, 2, d);
    ga2.mlp.output.set_weight_numerator(L.answer, 0, one);
    ga2.mlp.output.set_weight_numerator(L.answer, 1, -2 * one);
  }

  std::vector<LayerSpec> layers;
  layers.push_back(parity_layer(L, p));
  layers.push_back(std::move(ga1));
  layers.push_back(std::move(ga2));
  AffineMap output = answer_map(L, p, vocab, L.answer);
  DecoderSpec spec{p,
                   d,
                   std::move(vocab),
                   std::move(emb),
                   std::move(layers),
                   std::move(output),
                   "hybrid-n" + std::to_string(n) + "-s" + std::to_string(p.bits()) + "-seed" + std::to_string(seed)};
  spec.validate();
  return {std::move(spec), std::move(code), L};
}

DecoderSpec build_hybrid_decoder(std::size_t n, Precision p, std::uint64_t seed) {
  return std::move(build_hybrid(n, p, seed).spec);
}

DecoderSpec build_parity_only_decoder(std::size_t n, Precision p) {
  if (n == 0) throw EmptyInput("parity decoder needs n >= 1");
  const EmbeddingLayout L = make_layout(n, 0, 2);
  Vocabulary vocab = pcr_vocabulary();
  Embedding emb = base_embedding(L, p, vocab, nullptr);
  std::vector<LayerSpec> layers;
  layers.push_back(parity_layer(L, p));
  AffineMap output = answer_map(L, p, vocab, L.parity);
  DecoderSpec spec{p,
                   L.d_model,
                   std::move(vocab),
                   std::move(emb),
                   std::move(layers),
                   std::move(output),
                   "parity-only-n" + std::to_string(n) + "-s" + std::to_string(p.bits())};
  spec.validate();
  return spec;
}

}  // namespace pcrsim::construct
