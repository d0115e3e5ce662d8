#include <gtest/gtest.h>

#include "pcrsim/construct.hpp"

namespace pcrsim::construct {
namespace {

using fixed::FixedScalar;

FixedVector vec(Precision p, std::int64_t a, std::int64_t b) { return FixedVector::from_numerators(p, {a, b}); }

TEST(RoundingIdentities, KappaProducts) {
  for (int s = 2; s <= 8; ++s) {
    const Precision p(s);
    const auto c = parity_cell_params(p);
    const auto kappa = FixedScalar::from_numerator(c.kappa, p);
    const auto delta = FixedScalar::from_numerator(1, p);
    const auto k = [p](std::int64_t v) { return FixedScalar::from_numerator(v, p); };
    EXPECT_GT(kappa.value(), fixed::Rational(1, 2));
    EXPECT_LE(kappa.value(), fixed::Rational(3, 4));
    EXPECT_EQ(fixed::mul_s(kappa, delta).numerator(), 1);
    EXPECT_EQ(fixed::mul_s(kappa, k(2)).numerator(), 1);
    EXPECT_EQ(fixed::mul_s(kappa, k(3)).numerator(), 2);
    EXPECT_EQ(fixed::mul_s(k(p.unit() / 2), delta).numerator(), 0);
    EXPECT_EQ(fixed::mul_s(k(3 * p.unit() / 4), delta).numerator(), 1);
  }
}

TEST(MacroUpdate, ConstantTable) {
  for (int s = 2; s <= 8; ++s) {
    const Precision p(s);
    const auto c = parity_cell_params(p);
    EXPECT_EQ(apply_macro_update(c.p0, Macro::kZ, p), c.p0);
    EXPECT_EQ(apply_macro_update(c.p1, Macro::kZ, p), c.p1);
    EXPECT_EQ(apply_macro_update(c.p0, Macro::kG, p), c.h0);
    EXPECT_EQ(apply_macro_update(c.p1, Macro::kG, p), c.h1);
    EXPECT_EQ(apply_macro_update(c.h0, Macro::kF, p), c.p1);
    EXPECT_EQ(apply_macro_update(c.h1, Macro::kF, p), c.p0);
    EXPECT_EQ(c.h0, vec(p, 2, 3));
    EXPECT_EQ(c.h1, vec(p, 3, 2));
  }
}

TEST(MacroUpdate, TrajectoriesFollowParity) {
  const Precision p(2);
  const auto c = parity_cell_params(p);
  EXPECT_EQ(macro_trajectory({}, p), c.p0);
  EXPECT_EQ(macro_trajectory({1, 1}, p), c.p0);
  EXPECT_EQ(macro_trajectory({1, 0, 1, 1}, p), c.p1);
  for (std::size_t len = 1; len <= 8; ++len) {
    for (std::uint64_t t = 0; t < (1u << len); ++t) {
      const auto y = pcr::table_from_index(t, len);
      EXPECT_EQ(macro_trajectory(y, p), pcr::parity(y) ? c.p1 : c.p0);
    }
  }
}

TEST(ParityCell, EmbeddedHeadReproducesMacroTrajectories) {
  for (int s = 2; s <= 4; ++s) {
    const Precision p(s);
    const std::size_t n = 6;
    const auto spec = build_parity_only_decoder(n, p);
    for (std::uint64_t t = 0; t < (1u << n); ++t) {
      const auto y = pcr::table_from_index(t, n);
      nn::GdnScanner scan(spec);
      FixedVector x = parity_cell_params(p).p0;
      const auto macros = macros_for_bits(y);
      const auto tokens = table_tokens(spec.vocab, y);
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        scan.push(tokens[i]);
        x = apply_macro_update(x, macros[i], p);
        const auto& S = scan.state()[0].heads[0];
        ASSERT_EQ(S.row(0), x) << "s=" << s << " table " << t << " step " << i;
        ASSERT_TRUE(S.row(1).is_zero());
      }
    }
  }
}

TEST(ParityOnly, AnswersParityOnly) {
  const Precision p(2);
  const auto spec = build_parity_only_decoder(3, p);
  EXPECT_TRUE(spec.is_pure_gdn());
  pcr::for_each_instance(3, [&](const pcr::PcrInstance& inst) {
    const auto t = nn::greedy_decode(spec, prompt_tokens(spec.vocab, inst), 0);
    EXPECT_EQ(t.answer, pcr::parity(inst.y) ? nn::Answer::kYes : nn::Answer::kNo) << inst.to_string();
  });
}

TEST(Layout, DisjointAndPadded) {
  const auto L = make_layout(5, 24, 48);
  EXPECT_EQ(L.d_model, 96u);
  EXPECT_EQ(L.address, L.fixed_coordinates());
  EXPECT_EQ(L.retrieved + L.m, 14u + 72u);
  const auto small = make_layout(5, 0, 2);
  EXPECT_EQ(small.d_model, 14u);
}

TEST(Hybrid, SmallInstancesExhaustive) {
  for (int s : {2, 3}) {
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = build_hybrid(n, Precision(s), 7);
      EXPECT_TRUE(h.spec.is_hybrid());
      EXPECT_EQ(h.spec.d_model, 4 * h.code.m());
      pcr::for_each_instance(n, [&](const pcr::PcrInstance& inst) {
        const auto t = nn::greedy_decode(h.spec, prompt_tokens(h.spec.vocab, inst), 0);
        EXPECT_EQ(t.answer, pcr::ground_truth(inst) ? nn::Answer::kYes : nn::Answer::kNo)
            << "s=" << s << " " << inst.to_string();
        EXPECT_TRUE(t.scratch_tokens.empty());
      });
    }
  }
}

TEST(Hybrid, AttentionIsExactlyOneHot) {
  const Precision p(2);
  const std::size_t n = 3;
  const auto h = build_hybrid(n, p, 5);
  pcr::for_each_instance(n, [&](const pcr::PcrInstance& inst) {
    nn::ForwardTrace trace;
    nn::decoder_forward(h.spec, prompt_tokens(h.spec.vocab, inst), &trace);
    FixedVector want1(p, 3 * n), want2(p, 3 * n);
    want1.set_numerator(2 * n + inst.j - 1, p.unit());
    want2.set_numerator(2 * inst.j - 2, p.unit());
    EXPECT_EQ(trace.last_position_weights[1][0], want1) << inst.to_string();
    EXPECT_EQ(trace.last_position_weights[2][0], want2) << inst.to_string();
  });
}

TEST(Hybrid, WithoutGdnAnswersTheRetrievedBit) {
  const Precision p(2);
  const auto h = build_hybrid(3, p, 1);
  const auto ga = nn::strip_layers(h.spec, nn::LayerKind::kGdn);
  EXPECT_TRUE(ga.is_pure_ga());
  pcr::for_each_instance(3, [&](const pcr::PcrInstance& inst) {
    const auto t = nn::greedy_decode(ga, prompt_tokens(ga.vocab, inst), 0);
    EXPECT_EQ(t.answer, inst.y[inst.j - 1] ? nn::Answer::kYes : nn::Answer::kNo);
  });
}

TEST(Hybrid, DimensionGrowsWithCodeLength) {
  const Precision p(2);
  std::vector<std::size_t> dims;
  for (std::size_t n : {4, 16, 64}) dims.push_back(build_hybrid(n, p, 1).spec.d_model);
  EXPECT_EQ(dims, (std::vector<std::size_t>{288, 480, 672}));
}

TEST(Hybrid, DeterministicPerSeed) {
  const Precision p(3);
  const auto a = build_hybrid(4, p, 9);
  const auto b = build_hybrid(4, p, 9);
  EXPECT_EQ(a.code, b.code);
  EXPECT_EQ(a.spec.embedding, b.spec.embedding);
  EXPECT_EQ(a.spec.output, b.spec.output);
}

}  // namespace
}  // namespace pcrsim::construct
