#include <gtest/gtest.h>

#include "shapguard/attribution.hpp"
#include "shapguard/error.hpp"
#include "support.hpp"

using namespace shapguard;

namespace {

MlpModel linear_net(const Vector& w, double c) {
  MlpSpec spec;
  spec.layer_sizes = {static_cast<size_t>(w.size()), 1};
  MlpModel m = init(spec);
  m.weights[0] = w.transpose();
  m.biases[0](0) = c;
  return m;
}

BackgroundSet bg_of(Matrix samples) {
  BackgroundSet bg;
  bg.samples = std::move(samples);
  return bg;
}

}  // namespace

TEST(ExpectedOutput, SingletonLinearityAndDuplicates) {
  std::mt19937_64 rng(1);
  const auto net = testkit::random_net({4, 5, 1}, 3);
  const Vector b = testkit::random_vector(4, rng);
  EXPECT_DOUBLE_EQ(expected_output(net, bg_of(b.transpose())), logit(net, b));

  Vector w(3);
  w << 0.5, -1.0, 2.0;
  const auto lin = linear_net(w, 0.3);
  Matrix two(2, 3);
  two << 0.1, 0.2, 0.3, 0.5, 0.7, 0.9;
  EXPECT_NEAR(expected_output(lin, bg_of(two)),
              w.dot((two.row(0) + two.row(1)).transpose()) / 2 + 0.3, 1e-15);

  const Matrix bgm = testkit::random_matrix(5, 4, rng);
  Matrix doubled(10, 4);
  doubled << bgm, bgm;
  EXPECT_NEAR(expected_output(net, bg_of(bgm)), expected_output(net, bg_of(doubled)), 1e-14);
  EXPECT_THROW(expected_output(net, BackgroundSet{}), EmptyDatasetError);
}

TEST(DeepLift, LinearZeroDeltaAndSummation) {
  Vector w(3);
  w << 0.5, -1.0, 2.0;
  const auto lin = linear_net(w, 0.3);
  Vector x(3), b(3);
  x << 0.9, 0.1, 0.4;
  b << 0.2, 0.6, 0.4;
  const Vector phi = deeplift_single(lin, x, b);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(phi(j), w(j) * (x(j) - b(j)), 1e-15);

  std::mt19937_64 rng(2);
  for (uint64_t s = 0; s < 50; ++s) {
    const auto net = testkit::random_net({6, 8, 7, 1}, s);
    const Vector xs = testkit::random_vector(6, rng);
    const Vector bs = testkit::random_vector(6, rng);
    EXPECT_EQ(deeplift_single(net, xs, xs).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE(std::abs(deeplift_single(net, xs, bs).sum() - (logit(net, xs) - logit(net, bs))), 1e-8);
  }
}

TEST(ShapFingerprint, SingletonMatchesDeepLift) {
  std::mt19937_64 rng(3);
  const auto net = testkit::random_net({5, 6, 1}, 4);
  const Vector x = testkit::random_vector(5, rng);
  const Vector b = testkit::random_vector(5, rng);
  const auto fp = shap_fingerprint(net, x, bg_of(b.transpose()));
  EXPECT_LE((fp.phi - deeplift_single(net, x, b)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_DOUBLE_EQ(fp.phi0, logit(net, b));
  EXPECT_DOUBLE_EQ(fp.model_output, logit(net, x));
}

TEST(ShapFingerprint, LinearModelIsExactShapley) {
  std::mt19937_64 rng(4);
  const Vector w = testkit::random_vector(7, rng, -2, 2);
  const auto lin = linear_net(w, -0.4);
  const Matrix B = testkit::random_matrix(30, 7, rng);
  const Vector mean = B.colwise().mean().transpose();
  const Vector x = testkit::random_vector(7, rng);
  const auto fp = shap_fingerprint(lin, x, bg_of(B));
  for (int j = 0; j < 7; ++j) EXPECT_NEAR(fp.phi(j), w(j) * (x(j) - mean(j)), 1e-10);
}

TEST(ShapFingerprint, CompletenessOnRandomNets) {
  std::mt19937_64 rng(5);
  for (uint64_t s = 0; s < 100; ++s) {
    const auto net = testkit::random_net({8, 12, 6, 1}, s);
    const auto fp = shap_fingerprint(net, testkit::random_vector(8, rng),
                                     bg_of(testkit::random_matrix(20, 8, rng)));
    EXPECT_LE(fp.completeness_gap(), 1e-5 * std::max(1.0, std::abs(fp.model_output)));
    EXPECT_TRUE(fp.complete());
  }
}

TEST(ShapFingerprint, RejectsBadShapes) {
  const auto net = testkit::random_net({3, 4, 2}, 1);
  EXPECT_THROW(shap_fingerprint(net, Vector::Zero(3), bg_of(Matrix::Zero(2, 3))), ContractError);
  const auto ok = testkit::random_net({3, 4, 1}, 1);
  EXPECT_THROW(shap_fingerprint(ok, Vector::Zero(2), bg_of(Matrix::Zero(2, 3))), DimensionError);
}

TEST(FingerprintBatch, FilterCountsAndBatchEqualsSingle) {
  std::mt19937_64 rng(6);
  const auto net = testkit::random_net({4, 6, 1}, 9);
  const Matrix X = testkit::random_matrix(5, 4, rng);
  const BackgroundSet bg = bg_of(testkit::random_matrix(10, 4, rng));
  const std::vector<int> labels = {1, 0, 1, 1, 0};
  const auto mal = fingerprint_batch(net, X, bg, &labels, 1);
  ASSERT_EQ(mal.size(), 3u);
  EXPECT_EQ(mal[0].sample_id, 0);
  EXPECT_EQ(mal[1].sample_id, 2);
  EXPECT_EQ(mal[2].sample_id, 3);
  const auto all = fingerprint_batch(net, X, bg);
  ASSERT_EQ(all.size(), 5u);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const auto single = shap_fingerprint(net, X.row(i).transpose(), bg);
    EXPECT_TRUE(single.phi == all[static_cast<size_t>(i)].phi);
    EXPECT_EQ(single.phi0, all[static_cast<size_t>(i)].phi0);
  }
  const std::vector<int> benign(5, 0);
  EXPECT_THROW(fingerprint_batch(net, X, bg, &benign, 1), EmptyDatasetError);
}

TEST(Background, SampledWithoutReplacementDeterministically) {
  FlowDataset ds;
  ds.schema = FeatureSchema::generic(2);
  ds.X = Matrix(6, 2);
  for (int i = 0; i < 6; ++i) ds.X.row(i) << i, -i;
  ds.y = {0, 1, 0, 1, 0, 1};
  const auto a = sample_background(ds, 4, 3);
  const auto b = sample_background(ds, 4, 3);
  EXPECT_EQ(a.size(), 4u);
  EXPECT_TRUE(a.samples == b.samples);
  std::vector<double> firsts;
  for (Eigen::Index i = 0; i < 4; ++i) firsts.push_back(a.samples(i, 0));
  std::sort(firsts.begin(), firsts.end());
  EXPECT_EQ(std::unique(firsts.begin(), firsts.end()), firsts.end());
  EXPECT_EQ(sample_background(ds, 100, 3).size(), 6u);
}

TEST(FingerprintCsv, RoundTripIsExact) {
  std::mt19937_64 rng(7);
  const auto net = testkit::random_net({3, 4, 1}, 5);
  const auto fps = fingerprint_batch(net, testkit::random_matrix(4, 3, rng),
                                     bg_of(testkit::random_matrix(6, 3, rng)));
  const auto dir = testkit::scratch_dir("fp_csv");
  save_fingerprints(fps, "pgd", dir / "f.csv");
  std::string origin;
  const auto back = load_fingerprints(dir / "f.csv", &origin);
  EXPECT_EQ(origin, "pgd");
  ASSERT_EQ(back.size(), fps.size());
  for (size_t i = 0; i < fps.size(); ++i) {
    EXPECT_TRUE(back[i].phi == fps[i].phi);
    EXPECT_EQ(back[i].phi0, fps[i].phi0);
    EXPECT_EQ(back[i].model_output, fps[i].model_output);
    EXPECT_EQ(back[i].sample_id, fps[i].sample_id);
  }
}
