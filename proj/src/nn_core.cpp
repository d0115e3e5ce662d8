#include "pcrsim/nn_core.hpp"

#include <algorithm>

namespace pcrsim::nn {

namespace kernel = fixed::kernel;

namespace {

void check_format(const FixedVector& v, const char* where) {
  if (!v.in_format()) throw InvalidPrecision(std::string("value escaped F_s at ") + where);
}

void require_dim(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    throw DimensionMismatch(what + ": expected " + std::to_string(want) + ", got " + std::to_string(got));
  }
}

void set_sparse(SparseVector& row, std::uint32_t coord, std::int64_t k) {
  auto it = std::lower_bound(row.begin(), row.end(), coord,
                             [](const auto& e, std::uint32_t c) { return e.first < c; });
  if (it != row.end() && it->first == coord) {
    if (k == 0) {
      row.erase(it);
    } else {
      it->second = k;
    }
  } else if (k != 0) {
    row.insert(it, {coord, k});
  }
}

void check_numerator(std::int64_t k, Precision p) {
  if (k > p.max_numerator() || k < -p.max_numerator()) throw InvalidPrecision("numerator outside F_s");
}

// Coordinatewise strict residual add.
FixedVector residual_add(const FixedVector& h, const FixedVector& t) {
  require_dim(t.size(), h.size(), "residual width");
  FixedVector out = h;
  const Precision p = h.precision();
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (t.numerator(i) != 0) out.set_numerator(i, kernel::add(h.numerator(i), t.numerator(i), p));
  }
  return out;
}

// Token-mixing output T, residual, then the residual MLP.
FixedVector finish_layer(const LayerSpec& layer, const FixedVector& h, const FixedVector& heads_concat) {
  const FixedVector mixed = residual_add(h, layer.out_proj.apply(heads_concat));
  check_format(mixed, "token-mixing residual");
  const FixedVector out = residual_add(mixed, layer.mlp.apply(mixed));
  check_format(out, "MLP residual");
  return out;
}

std::int64_t unit_activation(UnitActivation a, std::int64_t x, Precision p) {
  switch (a) {
    case UnitActivation::kClamp:
      return std::clamp<std::int64_t>(x, 0, p.unit());
    case UnitActivation::kSigmoid:
      return kernel::sigmoid(x, p);
  }
  return 0;
}

FixedVector gate_of(const AffineMap& g, const FixedVector& h) {
  FixedVector pre = g.apply(h);
  for (std::size_t i = 0; i < pre.size(); ++i) pre.set_numerator(i, kernel::sigmoid(pre.numerator(i), pre.precision()));
  return pre;
}

std::int64_t dot_strict_row(std::span<const std::int64_t> row, const FixedVector& x, Precision p) {
  std::int64_t acc = kernel::mul(row[0], x.numerator(0), p);
  for (std::size_t i = 1; i < row.size(); ++i) acc = kernel::add(acc, kernel::mul(row[i], x.numerator(i), p), p);
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------

AffineMap::AffineMap(Precision p, std::size_t in_dim, std::size_t out_dim)
    : p_(p), in_dim_(in_dim), rows_(out_dim), bias_(out_dim, 0) {}

void AffineMap::set_weight_numerator(std::size_t row, std::size_t col, std::int64_t k) {
  if (row >= rows_.size() || col >= in_dim_) throw DimensionMismatch("affine weight index out of range");
  check_numerator(k, p_);
  set_sparse(rows_[row], static_cast<std::uint32_t>(col), k);
}

void AffineMap::set_weight(std::size_t row, std::size_t col, const FixedScalar& w) {
  if (!(w.precision() == p_)) throw InvalidPrecision("affine weight precision mismatch");
  set_weight_numerator(row, col, w.numerator());
}

void AffineMap::set_bias_numerator(std::size_t row, std::int64_t k) {
  if (row >= bias_.size()) throw DimensionMismatch("affine bias index out of range");
  check_numerator(k, p_);
  bias_[row] = k;
}

void AffineMap::set_bias(std::size_t row, const FixedScalar& b) {
  if (!(b.precision() == p_)) throw InvalidPrecision("affine bias precision mismatch");
  set_bias_numerator(row, b.numerator());
}

std::int64_t AffineMap::weight_numerator(std::size_t row, std::size_t col) const {
  for (const auto& [c, k] : rows_.at(row))
    if (c == col) return k;
  return 0;
}

std::size_t AffineMap::nonzeros() const {
  std::size_t n = 0;
  for (const auto& r : rows_) n += r.size();
  return n;
}

bool AffineMap::is_zero() const {
  for (std::size_t r = 0; r < rows_.size(); ++r)
    if (!rows_[r].empty() || bias_[r] != 0) return false;
  return true;
}

FixedVector AffineMap::apply(const FixedVector& x) const {
  require_dim(x.size(), in_dim_, "affine input width");
  if (!(x.precision() == p_)) throw InvalidPrecision("affine input precision mismatch");
  FixedVector out(p_, rows_.size());
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    std::int64_t acc = 0;
    for (const auto& [c, w] : rows_[r]) acc = kernel::add(acc, kernel::mul(w, x.numerator(c), p_), p_);
    out.set_numerator(r, kernel::add(acc, bias_[r], p_));
  }
  return out;
}

FixedVector MlpParams::apply(const FixedVector& x) const {
  FixedVector hid = hidden.apply(x);
  for (std::size_t i = 0; i < hid.size(); ++i)
    if (hid.numerator(i) < 0) hid.set_numerator(i, 0);
  return output.apply(hid);
}

const char* to_string(LayerKind kind) { return kind == LayerKind::kGa ? "GA" : "GDN"; }

const char* to_string(Answer a) {
  switch (a) {
    case Answer::kYes:
      return "YES";
    case Answer::kNo:
      return "NO";
    case Answer::kBudgetExceeded:
      return "BUDGET_EXCEEDED";
  }
  return "?";
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> symbols, std::string yes, std::string no,
                       std::vector<std::string> scratch)
    : symbols_(std::move(symbols)), yes_(0), no_(0) {
  for (std::size_t i = 0; i < symbols_.size(); ++i)
    for (std::size_t j = i + 1; j < symbols_.size(); ++j)
      if (symbols_[i] == symbols_[j]) throw FormatError("duplicate vocabulary symbol " + symbols_[i]);
  yes_ = id(yes);
  no_ = id(no);
  if (!(yes_ < no_)) throw FormatError("tie order requires YES before NO");
  for (const auto& name : scratch) {
    const TokenId t = id(name);
    if (t <= no_) throw FormatError("scratch symbol " + name + " must follow YES and NO in the tie order");
    scratch_.push_back(t);
  }
  std::sort(scratch_.begin(), scratch_.end());
}

std::optional<TokenId> Vocabulary::find(const std::string& name) const {
  for (std::size_t i = 0; i < symbols_.size(); ++i)
    if (symbols_[i] == name) return i;
  return std::nullopt;
}

TokenId Vocabulary::id(const std::string& name) const {
  if (auto t = find(name)) return *t;
  throw FormatError("unknown vocabulary symbol " + name);
}

bool Vocabulary::is_scratch(TokenId id) const {
  return std::binary_search(scratch_.begin(), scratch_.end(), id);
}

Embedding::Embedding(Precision p, std::size_t d_model, std::size_t vocab_size, std::size_t max_context)
    : p_(p), d_model_(d_model), token_rows_(vocab_size), position_rows_(max_context) {}

void Embedding::set_token(TokenId z, std::size_t coord, std::int64_t k) {
  if (z >= token_rows_.size() || coord >= d_model_) throw DimensionMismatch("embedding token index out of range");
  check_numerator(k, p_);
  set_sparse(token_rows_[z], static_cast<std::uint32_t>(coord), k);
}

void Embedding::set_position(std::size_t pos, std::size_t coord, std::int64_t k) {
  if (pos == 0 || pos > position_rows_.size() || coord >= d_model_) {
    throw DimensionMismatch("embedding position index out of range");
  }
  check_numerator(k, p_);
  set_sparse(position_rows_[pos - 1], static_cast<std::uint32_t>(coord), k);
}

void Embedding::set_joint(TokenId z, std::size_t pos, std::size_t coord, std::int64_t k) {
  if (z >= token_rows_.size() || pos == 0 || pos > position_rows_.size() || coord >= d_model_) {
    throw DimensionMismatch("embedding joint index out of range");
  }
  check_numerator(k, p_);
  auto& row = joint_[{z, pos}];
  set_sparse(row, static_cast<std::uint32_t>(coord), k);
  if (row.empty()) joint_.erase({z, pos});
}

FixedVector Embedding::embed(TokenId z, std::size_t pos) const {
  if (pos == 0 || pos > position_rows_.size()) {
    throw ContextOverflow("position " + std::to_string(pos) + " exceeds context " +
                          std::to_string(position_rows_.size()));
  }
  if (z >= token_rows_.size()) throw DimensionMismatch("token id out of range");
  FixedVector out(p_, d_model_);
  const auto add_row = [&](const SparseVector& row) {
    for (const auto& [c, k] : row) out.set_numerator(c, kernel::add(out.numerator(c), k, p_));
  };
  add_row(token_rows_[z]);
  add_row(position_rows_[pos - 1]);
  if (auto it = joint_.find({z, pos}); it != joint_.end()) add_row(it->second);
  return out;
}

// ---------------------------------------------------------------------------

bool DecoderSpec::has(LayerKind kind) const {
  return std::any_of(layers.begin(), layers.end(), [kind](const LayerSpec& l) { return l.kind == kind; });
}

std::size_t DecoderSpec::recurrent_scalar_count() const {
  std::size_t n = 0;
  for (const auto& l : layers)
    if (l.kind == LayerKind::kGdn) n += l.gdn_heads.size() * l.head_dim * l.head_dim;
  return n;
}

void DecoderSpec::validate() const {
  const auto same = [&](Precision p, const std::string& what) {
    if (!(p == precision)) throw InvalidPrecision(what + " uses a different precision");
  };
  const auto affine = [&](const AffineMap& m, std::size_t in, std::size_t out, const std::string& what) {
    same(m.precision(), what);
    require_dim(m.in_dim(), in, what + " input width");
    require_dim(m.out_dim(), out, what + " output width");
  };
  same(embedding.precision(), "embedding");
  require_dim(embedding.d_model(), d_model, "embedding width");
  require_dim(embedding.vocab_size(), vocab.size(), "embedding vocabulary");
  affine(output, d_model, vocab.size(), "output map");
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LayerSpec& l = layers[li];
    const std::string tag = "layer " + std::to_string(li);
    const std::size_t heads = l.head_count();
    if (heads == 0 || l.head_dim == 0) throw DimensionMismatch(tag + " has no heads");
    require_dim(heads * l.head_dim, d_model, tag + " heads * head_dim");
    if (l.kind == LayerKind::kGa && !l.gdn_heads.empty()) throw DimensionMismatch(tag + " mixes head kinds");
    if (l.kind == LayerKind::kGdn && !l.ga_heads.empty()) throw DimensionMismatch(tag + " mixes head kinds");
    for (const auto& h : l.ga_heads) {
      affine(h.query, d_model, l.head_dim, tag + " query");
      affine(h.key, d_model, l.head_dim, tag + " key");
      affine(h.value, d_model, l.head_dim, tag + " value");
      affine(h.gate, d_model, l.head_dim, tag + " gate");
    }
    for (const auto& h : l.gdn_heads) {
      affine(h.query, d_model, l.head_dim, tag + " query");
      affine(h.key, d_model, l.head_dim, tag + " key");
      affine(h.value, d_model, l.head_dim, tag + " value");
      affine(h.alpha, d_model, 1, tag + " alpha");
      affine(h.beta, d_model, 1, tag + " beta");
      affine(h.gate, d_model, l.head_dim, tag + " gate");
      same(h.initial_state.precision(), tag + " initial state");
      require_dim(h.initial_state.rows(), l.head_dim, tag + " initial state rows");
      require_dim(h.initial_state.cols(), l.head_dim, tag + " initial state cols");
    }
    affine(l.out_proj, heads * l.head_dim, d_model, tag + " output projection");
    affine(l.mlp.hidden, d_model, l.mlp.hidden.out_dim(), tag + " MLP hidden");
    affine(l.mlp.output, l.mlp.hidden.out_dim(), d_model, tag + " MLP output");
  }
}

DecoderSpec strip_layers(const DecoderSpec& spec, LayerKind kind) {
  DecoderSpec out = spec;
  out.layers.clear();
  for (const auto& l : spec.layers)
    if (l.kind != kind) out.layers.push_back(l);
  out.label = spec.label + (kind == LayerKind::kGa ? "-without-ga" : "-without-gdn");
  return out;
}

GdnState initial_state(const LayerSpec& layer) {
  GdnState st;
  for (const auto& h : layer.gdn_heads) st.heads.push_back(h.initial_state);
  return st;
}

// ---------------------------------------------------------------------------
// Gated Attention.

std::vector<FixedVector> ga_layer_forward(const LayerSpec& layer, const std::vector<FixedVector>& hiddens,
                                          std::vector<FixedVector>* last_weights) {
  if (layer.kind != LayerKind::kGa) throw DimensionMismatch("ga_layer_forward on a non-GA layer");
  const std::size_t n = hiddens.size();
  if (last_weights) last_weights->clear();
  if (n == 0) return {};
  const Precision p = hiddens.front().precision();
  const std::size_t dh = layer.head_dim;
  const std::size_t H = layer.ga_heads.size();

  // concat[i] holds [o_i^1 ... o_i^H].
  std::vector<FixedVector> concat(n, FixedVector(p, H * dh));

  for (std::size_t a = 0; a < H; ++a) {
    const GaHeadParams& head = layer.ga_heads[a];
    if (head.value.is_zero()) {
      // Every mixed value is 0 and so is the gated output; weights still
      // matter to observers.
      if (!last_weights) continue;
    }
    std::vector<FixedVector> q, k, v, g;
    q.reserve(n);
    k.reserve(n);
    v.reserve(n);
    g.reserve(n);
    for (const auto& h : hiddens) {
      q.push_back(fixed::rmsnorm_s(head.query.apply(h)));
      k.push_back(fixed::rmsnorm_s(head.key.apply(h)));
      v.push_back(head.value.apply(h));
      g.push_back(gate_of(head.gate, h));
    }
    FixedVector scores(p, n);
    for (std::size_t i = 0; i < n; ++i) {
      const bool observe = last_weights && i + 1 == n;
      if (head.value.is_zero() && !observe) continue;
      FixedVector z(p, i + 1);
      for (std::size_t j = 0; j <= i; ++j) {
        fixed::Wide acc = 0;
        for (std::size_t c = 0; c < dh; ++c) acc += static_cast<fixed::Wide>(q[i].numerator(c)) * k[j].numerator(c);
        z.set_numerator(j, kernel::score(acc, dh, p));
      }
      const FixedVector weights = fixed::softmax_s(z);
      if (observe) last_weights->push_back(weights);
      // u = sum_s(A_i1 v_1, ..., A_ii v_i) per coordinate; zero weights add 0.
      for (std::size_t c = 0; c < dh; ++c) {
        std::int64_t u = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          const std::int64_t w = weights.numerator(j);
          if (w != 0) u = kernel::add(u, kernel::mul(w, v[j].numerator(c), p), p);
        }
        concat[i].set_numerator(a * dh + c, kernel::mul(g[i].numerator(c), u, p));
      }
    }
  }

  std::vector<FixedVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(finish_layer(layer, hiddens[i], concat[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Gated DeltaNet.

std::pair<GdnState, FixedVector> gdn_layer_step(const LayerSpec& layer, const GdnState& state,
                                                const FixedVector& h) {
  if (layer.kind != LayerKind::kGdn) throw DimensionMismatch("gdn_layer_step on a non-GDN layer");
  require_dim(state.heads.size(), layer.gdn_heads.size(), "GDN state head count");
  const Precision p = h.precision();
  const std::size_t dh = layer.head_dim;
  GdnState next = state;
  FixedVector concat(p, layer.gdn_heads.size() * dh);

  for (std::size_t a = 0; a < layer.gdn_heads.size(); ++a) {
    const GdnHeadParams& head = layer.gdn_heads[a];
    const FixedMatrix& S = state.heads[a];
    require_dim(S.rows(), dh, "GDN state rows");
    // Zero state with zero values stays zero and reads out 0.
    if (head.value.is_zero() && std::all_of(S.numerators().begin(), S.numerators().end(),
                                            [](std::int64_t k) { return k == 0; })) {
      continue;
    }
    const FixedVector q = fixed::l2norm_s(head.query.apply(h));
    const FixedVector k = fixed::l2norm_s(head.key.apply(h));
    const FixedVector v = head.value.apply(h);
    const std::int64_t alpha = unit_activation(head.alpha_activation, head.alpha.apply(h).numerator(0), p);
    const std::int64_t beta = unit_activation(head.beta_activation, head.beta.apply(h).numerator(0), p);
    const FixedVector gamma = gate_of(head.gate, h);

    FixedMatrix& Snew = next.heads[a];
    const auto Sk = S.numerators();
    // Row r: x <- alpha (x - (beta <x,k>_s) k) + (beta v_r) k, rounded per scalar.
    for (std::size_t r = 0; r < dh; ++r) {
      const auto row = Sk.subspan(r * dh, dh);
      const std::int64_t proj = dot_strict_row(row, k, p);
      const std::int64_t c = kernel::mul(beta, proj, p);
      const std::int64_t bv = kernel::mul(beta, v.numerator(r), p);
      FixedVector new_row(p, dh);
      for (std::size_t col = 0; col < dh; ++col) {
        const std::int64_t w = kernel::add(row[col], -kernel::mul(c, k.numerator(col), p), p);
        const std::int64_t x = kernel::add(kernel::mul(alpha, w, p), kernel::mul(bv, k.numerator(col), p), p);
        new_row.set_numerator(col, x);
      }
      Snew.set_row(r, new_row);
    }

    // Readout u = S q (strict), o = gamma * RMSNorm_s(u).
    FixedVector u(p, dh);
    const auto Sn = Snew.numerators();
    for (std::size_t r = 0; r < dh; ++r) u.set_numerator(r, dot_strict_row(Sn.subspan(r * dh, dh), q, p));
    const FixedVector normed = fixed::rmsnorm_s(u);
    for (std::size_t c = 0; c < dh; ++c) {
      concat.set_numerator(a * dh + c, kernel::mul(gamma.numerator(c), normed.numerator(c), p));
    }
  }
  return {std::move(next), finish_layer(layer, h, concat)};
}

std::vector<FixedVector> gdn_layer_forward(const LayerSpec& layer, const std::vector<FixedVector>& hiddens,
                                           GdnState* final_state) {
  GdnState st = initial_state(layer);
  std::vector<FixedVector> out;
  out.reserve(hiddens.size());
  for (const auto& h : hiddens) {
    auto [next, y] = gdn_layer_step(layer, st, h);
    st = std::move(next);
    out.push_back(std::move(y));
  }
  if (final_state) *final_state = std::move(st);
  return out;
}

// ---------------------------------------------------------------------------
// Decoder.

std::vector<FixedVector> decoder_hiddens(const DecoderSpec& spec, const std::vector<TokenId>& tokens,
                                         ForwardTrace* trace) {
  if (tokens.size() > spec.max_context()) {
    throw ContextOverflow("sequence of length " + std::to_string(tokens.size()) + " exceeds context " +
                          std::to_string(spec.max_context()));
  }
  std::vector<FixedVector> h;
  h.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) h.push_back(spec.embedding.embed(tokens[i], i + 1));
  if (trace) {
    trace->last_position_weights.assign(spec.layers.size(), {});
    trace->final_states.assign(spec.layers.size(), {});
  }
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& layer = spec.layers[li];
    if (layer.kind == LayerKind::kGa) {
      h = ga_layer_forward(layer, h, trace ? &trace->last_position_weights[li] : nullptr);
    } else {
      h = gdn_layer_forward(layer, h, trace ? &trace->final_states[li] : nullptr);
    }
  }
  return h;
}

FixedVector decoder_forward(const DecoderSpec& spec, const std::vector<TokenId>& tokens, ForwardTrace* trace) {
  if (tokens.empty()) throw EmptyInput("decoder_forward on an empty sequence");
  const auto h = decoder_hiddens(spec, tokens, trace);
  FixedVector logits = spec.output.apply(h.back());
  check_format(logits, "logits");
  return logits;
}

TokenId argmax_token(const FixedVector& logits) {
  if (logits.empty()) throw EmptyInput("argmax over empty logits");
  TokenId best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits.numerator(i) > logits.numerator(best)) best = i;
  return best;
}

GdnScanner::GdnScanner(const DecoderSpec& spec) : spec_(&spec) {
  if (!spec.is_pure_gdn()) throw NotPureGdn("GdnScanner requires a pure GDN decoder");
  for (const auto& l : spec.layers) states_.push_back(initial_state(l));
}

FixedVector GdnScanner::push(TokenId token) {
  ++position_;
  FixedVector h = spec_->embedding.embed(token, position_);
  for (std::size_t li = 0; li < spec_->layers.size(); ++li) {
    auto [next, y] = gdn_layer_step(spec_->layers[li], states_[li], h);
    states_[li] = std::move(next);
    h = std::move(y);
  }
  last_ = h;
  return h;
}

FixedVector GdnScanner::logits() const {
  if (!last_) throw EmptyInput("no token consumed yet");
  return spec_->output.apply(*last_);
}

std::vector<std::int64_t> GdnScanner::fingerprint() const {
  std::vector<std::int64_t> fp;
  for (const auto& st : states_)
    for (const auto& m : st.heads) fp.insert(fp.end(), m.numerators().begin(), m.numerators().end());
  return fp;
}

Transcript greedy_decode(const DecoderSpec& spec, const std::vector<TokenId>& prompt, std::size_t budget) {
  Transcript t;
  std::vector<TokenId> seq = prompt;
  for (;;) {
    FixedVector logits = decoder_forward(spec, seq);
    const TokenId next = argmax_token(logits);
    t.step_logits.push_back(std::move(logits));
    ++t.steps;
    if (next == spec.vocab.yes() || next == spec.vocab.no()) {
      t.answer = next == spec.vocab.yes() ? Answer::kYes : Answer::kNo;
      return t;
    }
    if (!spec.vocab.is_scratch(next)) {
      throw NonScratchNonAnswerEmission("decoder emitted '" + spec.vocab.name(next) +
                                        "', which is neither scratch nor an answer");
    }
    if (t.scratch_tokens.size() == budget) {
      t.answer = Answer::kBudgetExceeded;
      return t;
    }
    t.scratch_tokens.push_back(next);
    seq.push_back(next);
  }
}

}  // namespace pcrsim::nn
