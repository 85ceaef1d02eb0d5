#include <doctest.h>

#include "coreg/metrics.hpp"
#include "support.hpp"

using namespace coreg;
using coreg::test::random_field;

namespace {

Image square(int top, int left, int size = 10) {
  Image img(32, 32, 0.0);
  for (int r = top; r < top + size; ++r)
    for (int c = left; c < left + size; ++c) img.at(r, c) = 1.0;
  return img;
}

}  // namespace

TEST_CASE("dice") {
  const Image a = square(5, 5);
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, square(20, 20)) == 0.0);
  CHECK(dice(a, square(5, 10)) == 0.5);  // 50 overlapping pixels of 100 + 100
  CHECK(dice(Image(8, 8, 0.0), Image(8, 8, 0.0)) == 1.0);
  CHECK(dice(a, square(7, 9)) == dice(square(7, 9), a));
  Image soft = a;
  soft.at(5, 5) = 0.49;
  CHECK(dice(a, soft) < 1.0);
  CHECK_THROWS_AS(dice(a, Image(32, 31)), std::invalid_argument);
}

TEST_CASE("landmark error") {
  const ShapeSample s = make_linear_boxbump(0.2), t = make_linear_boxbump(0.7);
  const double width = boxbump::kBumpWidth;
  SUBCASE("identity pair") {
    CHECK(landmark_error(DisplacementField(64, 64), t.landmarks, t.landmarks, width) == 0.0);
  }
  SUBCASE("ground-truth horizontal shift") {
    // Only the bump moves; the ground-truth field for its landmarks is a
    // constant column offset, checked on those three.
    const double shift = boxbump::bump_column(0.2) - boxbump::bump_column(0.7);
    const DisplacementField f = DisplacementField::uniform(64, 64, 0.0, shift);
    const std::span<const Coordinate> lt(t.landmarks.data(), 3), ls(s.landmarks.data(), 3);
    CHECK(landmark_error(f, lt, ls, width) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("zero field with a one-bump-width offset") {
    const double t0 = 0.3;
    const double t1 = t0 + width / (boxbump::bump_column(1.0) - boxbump::bump_column(0.0));
    const ShapeSample a = make_linear_boxbump(t0), b = make_linear_boxbump(t1);
    const DisplacementField zero(64, 64);
    // 3 bump landmarks at 100%, 4 corners at 0%.
    CHECK(landmark_error(zero, b.landmarks, a.landmarks, width) == doctest::Approx(300.0 / 7.0).epsilon(1e-9));
    const std::span<const Coordinate> bt(b.landmarks.data(), 3), bs(a.landmarks.data(), 3);
    CHECK(landmark_error(zero, bt, bs, width) == doctest::Approx(100.0).epsilon(1e-9));
  }
  SUBCASE("field transporting every landmark gives zero") {
    const std::vector<Coordinate> target{{10.0, 12.0}}, source{{13.0, 8.0}};
    CHECK(landmark_error(DisplacementField::uniform(32, 32, 3.0, -4.0), target, source, 10.0) == 0.0);
  }
  SUBCASE("errors") {
    const std::vector<Coordinate> outside{{70.0, 3.0}};
    CHECK_THROWS_AS(landmark_error(DisplacementField(64, 64), outside, outside, width), std::invalid_argument);
    const std::vector<Coordinate> two{{1.0, 1.0}, {2.0, 2.0}};
    CHECK_THROWS_AS(landmark_error(DisplacementField(64, 64), two, outside, width), std::invalid_argument);
  }
}

TEST_CASE("autoencoder relative error") {
  const DisplacementField f = random_field(6, 6, 2.0, 1), g = random_field(6, 6, 2.0, 2);
  const std::vector<DisplacementField> fields{f, g};
  CHECK(ae_relative_error(fields, fields) == 0.0);
  const std::vector<DisplacementField> zeros{DisplacementField(6, 6), DisplacementField(6, 6)};
  CHECK(ae_relative_error(fields, zeros) == doctest::Approx(100.0).epsilon(1e-12));

  SUBCASE("hand-computed 2x2 pair") {
    DisplacementField a(2, 2), b(2, 2);
    // a has values 1..8 (norm^2 = 204); b differs by 1 in two entries (norm^2 = 2).
    for (std::size_t i = 0; i < 8; ++i) a.values()[i] = static_cast<double>(i + 1);
    b = a;
    b.values()[0] += 1.0;
    b.values()[5] -= 1.0;
    const std::vector<DisplacementField> fa{a}, fb{b};
    CHECK(ae_relative_error(fa, fb) == doctest::Approx(100.0 * std::sqrt(2.0 / 204.0)).epsilon(1e-12));
  }
  SUBCASE("scale invariance") {
    std::vector<DisplacementField> fs = fields, gs{g, f};
    const double base = ae_relative_error(fs, gs);
    for (auto* list : {&fs, &gs})
      for (auto& x : *list)
        for (double& v : x.values()) v *= -3.5;
    CHECK(ae_relative_error(fs, gs) == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("zero fields are skipped") {
    const std::vector<DisplacementField> with_zero{f, DisplacementField(6, 6)};
    const std::vector<DisplacementField> recon{f, g};
    std::size_t skipped = 0;
    CHECK(ae_relative_error(with_zero, recon, &skipped) == 0.0);
    CHECK(skipped == 1);
    CHECK_THROWS_AS(ae_relative_error(zeros, zeros), std::invalid_argument);
    CHECK_THROWS_AS(ae_relative_error(fields, std::vector<DisplacementField>{f}), std::invalid_argument);
  }
}

TEST_CASE("post-hoc autoencoder fit") {
  PosthocOptions opt;
  opt.iterations = 300;
  opt.learning_rate = 1e-2;
  opt.batch_size = 4;
  opt.levels = 2;
  opt.base_channels = 4;
  SUBCASE("constant fields are representable") {
    const std::vector<DisplacementField> same(6, DisplacementField::uniform(16, 16, 1.5, -2.0));
    const PosthocFit fit = posthoc_ae_fit(same, 1, 3, opt);
    CHECK(fit.error_pct >= 0.0);
    CHECK(fit.error_pct <= 5.0);
    CHECK(fit.params.config.h == 1);
  }
  SUBCASE("wider latent does not fit worse") {
    std::vector<DisplacementField> fields;
    for (int i = 0; i < 12; ++i) fields.push_back(random_field(16, 16, 1.0, 100 + i));
    const double narrow = posthoc_ae_fit(fields, 1, 3, opt).error_pct;
    const double wide = posthoc_ae_fit(fields, 16, 3, opt).error_pct;
    CHECK(wide <= narrow + 2.0);
  }
  CHECK_THROWS_AS(posthoc_ae_fit(std::vector<DisplacementField>{}, 1, 3, opt), std::invalid_argument);
}

TEST_CASE("spearman") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(spearman(x, std::vector<double>{2, 4, 6, 8, 100}) == doctest::Approx(1.0));
  CHECK(spearman(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Ties take average ranks: y ranks are 1.5, 1.5, 3, 4, 5.
  const double r = spearman(x, std::vector<double>{1, 1, 2, 3, 4});
  CHECK(r == doctest::Approx(0.9746794344808963).epsilon(1e-12));
  CHECK_THROWS_AS(spearman(x, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("evaluating an untrained network is the identity registration") {
  const PairDataset d = build_pair_dataset(ShapeFamily::linear, 4, 1);
  const PrimaryParams p = init_primary(PrimaryConfig{}, 1);
  const RegistrationEval ev = evaluate_registration(p, d, d.test);
  CHECK(ev.result.n_pairs == static_cast<int>(d.test.size()));
  CHECK(ev.fields.size() == d.test.size());
  double expected_dice = 0.0, expected_lm = 0.0;
  for (const auto& pair : d.test) {
    expected_dice += dice(d.source(pair).image, d.target(pair).image);
    expected_lm += landmark_error(DisplacementField(64, 64), d.target(pair).landmarks, d.source(pair).landmarks,
                                  d.bump_width);
  }
  const double n = static_cast<double>(d.test.size());
  CHECK(ev.result.dice_mean == doctest::Approx(expected_dice / n).epsilon(1e-12));
  CHECK(ev.result.landmark_error_pct == doctest::Approx(expected_lm / n).epsilon(1e-12));
  CHECK(ev.result.test_runtime_sec > 0.0);
  CHECK(ev.result.dice_mean >= 0.0);
  CHECK(ev.result.dice_mean <= 1.0);
}
