#include <gtest/gtest.h>

#include "shapguard/data.hpp"
#include "shapguard/error.hpp"
#include "shapguard/io.hpp"
#include "support.hpp"

using namespace shapguard;

namespace {

std::string cic_header() {
  const auto schema = FeatureSchema::cic_iot2023();
  std::string h;
  for (const auto& n : schema.names()) h += n + ",";
  return h + "label\n";
}

std::string cic_row(double v, const std::string& label) {
  std::string r;
  for (size_t j = 0; j < 39; ++j) r += io::format_double(v + static_cast<double>(j)) + ",";
  return r + label + "\n";
}

FlowDataset balanced(size_t n_per_class) {
  SynthSpec s;
  s.n_per_class = n_per_class;
  s.m = 4;
  s.seed = 3;
  return synth_generate(s);
}

}  // namespace

TEST(Schema, CicHas39FeaturesInTableOrder) {
  const auto s = FeatureSchema::cic_iot2023();
  EXPECT_EQ(s.size(), 39u);
  EXPECT_EQ(s.index_of("Header_Length"), 0u);
  EXPECT_EQ(s.index_of("IAT"), 36u);
  EXPECT_EQ(s.index_of("Number"), 37u);
  EXPECT_EQ(s.index_of("Variance"), 38u);
  EXPECT_FALSE(s.index_of("nope").has_value());
}

TEST(Schema, RejectsDuplicatesAndEmpty) {
  EXPECT_THROW(FeatureSchema({"a", "a"}), SchemaError);
  EXPECT_THROW(FeatureSchema(std::vector<std::string>{}), SchemaError);
}

TEST(LoadCsv, MapsBenignLabelToZero) {
  const auto dir = testkit::scratch_dir("csv_labels");
  io::write_file(dir / "f.csv", cic_header() + cic_row(1, "BenignTraffic") + cic_row(2, "DDoS-ICMP_Flood"));
  const auto r = load_csv(dir / "f.csv", FeatureSchema::cic_iot2023());
  EXPECT_EQ(r.dataset.y, (std::vector<int>{0, 1}));
  EXPECT_EQ(r.dataset.X(1, 3), 5.0);
}

TEST(LoadCsv, MissingColumnNamesIt) {
  const auto dir = testkit::scratch_dir("csv_missing");
  std::string header = cic_header();
  header.replace(header.find("IAT,"), 4, "");
  std::string row;
  for (size_t j = 0; j < 38; ++j) row += "1,";
  io::write_file(dir / "f.csv", header + row + "BenignTraffic\n");
  try {
    load_csv(dir / "f.csv", FeatureSchema::cic_iot2023());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("IAT"), std::string::npos);
  }
}

TEST(LoadCsv, ShapePreservedAndColumnOrderIndependent) {
  const auto dir = testkit::scratch_dir("csv_shape");
  std::string body = cic_header();
  for (int i = 0; i < 100; ++i) body += cic_row(i, i % 3 ? "Mirai" : "BenignTraffic");
  io::write_file(dir / "f.csv", body);
  const auto r = load_csv(dir / "f.csv", FeatureSchema::cic_iot2023());
  EXPECT_EQ(r.dataset.rows(), 100u);
  EXPECT_EQ(r.dataset.features(), 39u);

  // Reversed column order plus an extra column maps by name.
  io::write_file(dir / "g.csv", "label,extra,b,a\nBenignTraffic,9,2,1\n");
  const auto g = load_csv(dir / "g.csv", FeatureSchema({"a", "b"}));
  EXPECT_EQ(g.dataset.X(0, 0), 1.0);
  EXPECT_EQ(g.dataset.X(0, 1), 2.0);
}

TEST(LoadCsv, DropsNonFiniteRowsAndRejectsText) {
  const auto dir = testkit::scratch_dir("csv_bad");
  io::write_file(dir / "f.csv", "a,b,label\n1,2,x\nnan,2,x\n3,inf,x\n4,5,BenignTraffic\n");
  const auto r = load_csv(dir / "f.csv", FeatureSchema({"a", "b"}));
  EXPECT_EQ(r.rows_read, 4u);
  EXPECT_EQ(r.rows_dropped, 2u);
  EXPECT_EQ(r.dataset.rows(), 2u);

  io::write_file(dir / "g.csv", "a,b,label\n1,oops,x\n");
  EXPECT_THROW(load_csv(dir / "g.csv", FeatureSchema({"a", "b"})), ParseError);
  io::write_file(dir / "h.csv", "a,b,label\n");
  EXPECT_THROW(load_csv(dir / "h.csv", FeatureSchema({"a", "b"})), EmptyDatasetError);
  EXPECT_THROW(load_csv(dir / "none.csv", FeatureSchema({"a", "b"})), IoError);
}

TEST(Scaler, FitPerColumn) {
  FlowDataset ds;
  ds.schema = FeatureSchema({"a", "b"});
  ds.X = Matrix(3, 2);
  ds.X << 2, 10, 4, 30, 6, 20;
  ds.y = {0, 1, 0};
  const auto s = fit_scaler(ds);
  EXPECT_EQ(s.min, (std::vector<double>{2, 10}));
  EXPECT_EQ(s.max, (std::vector<double>{6, 30}));
}

TEST(Scaler, MidpointClampAndDegenerate) {
  FlowDataset ds;
  ds.schema = FeatureSchema({"a", "c"});
  ds.X = Matrix(3, 2);
  ds.X << 4, 5, 10, 5, -1, 5;
  ds.y = {0, 0, 1};
  ScalerParams s{{2, 5}, {6, 5}};
  const auto out = apply_scaler(ds, s);
  EXPECT_EQ(out.X(0, 0), 0.5);
  EXPECT_EQ(out.X(1, 0), 1.0);
  EXPECT_EQ(out.X(2, 0), 0.0);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(out.X(i, 1), 0.0);
  EXPECT_THROW(apply_scaler(ds, ScalerParams{{0}, {1}}), DimensionError);
}

TEST(Split, SizesDeterminismAndDisjointness) {
  FlowDataset ds = balanced(5);
  SplitSpec spec;
  spec.seed = 7;
  const auto a = split(ds, spec);
  const auto b = split(ds, spec);
  EXPECT_EQ(a.train.rows(), 6u);
  EXPECT_EQ(a.val.rows(), 2u);
  EXPECT_EQ(a.test.rows(), 2u);
  EXPECT_EQ(a.train_index, b.train_index);
  EXPECT_EQ(a.test_index, b.test_index);
  std::vector<size_t> all = a.train_index;
  all.insert(all.end(), a.val_index.begin(), a.val_index.end());
  all.insert(all.end(), a.test_index.begin(), a.test_index.end());
  std::sort(all.begin(), all.end());
  for (size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
}

TEST(Split, Stratified) {
  FlowDataset ds = balanced(500);
  SplitSpec spec{0.8, 0.1, 0.1, 11};
  const auto s = split(ds, spec);
  for (const FlowDataset* part : {&s.train, &s.val, &s.test}) {
    const auto ones = static_cast<long>(part->count_label(1));
    const auto zeros = static_cast<long>(part->count_label(0));
    EXPECT_LE(std::abs(ones - zeros), 1);
  }
}

TEST(Split, BadFractionsAndSingleClassWarning) {
  FlowDataset ds = balanced(5);
  EXPECT_THROW(split(ds, SplitSpec{0.5, 0.2, 0.2, 1}), ConfigError);
  FlowDataset one = ds.select_rows({0, 2, 4});
  const auto s = split(one, SplitSpec{0.6, 0.2, 0.2, 1});
  EXPECT_FALSE(s.warnings.empty());
}

TEST(Synth, ShapeLabelsDeterminismAndBox) {
  SynthSpec spec;
  spec.n_per_class = 100;
  spec.m = 10;
  spec.seed = 5;
  const auto a = synth_generate(spec);
  const auto b = synth_generate(spec);
  EXPECT_EQ(a.rows(), 200u);
  EXPECT_EQ(a.count_label(1), 100u);
  EXPECT_TRUE(a.X == b.X);
  EXPECT_GE(a.X.minCoeff(), 0.0);
  EXPECT_LE(a.X.maxCoeff(), 1.0);
}

TEST(Synth, NonInformativeBlockAndZeroSeparation) {
  SynthSpec spec;
  spec.n_per_class = 4000;
  spec.m = 8;
  spec.seed = 9;
  const auto ds = synth_generate(spec);
  const auto noninf = synth_noninformative_features(8);
  EXPECT_EQ(noninf, (std::vector<size_t>{6, 7}));
  Vector mean0 = Vector::Zero(8), mean1 = Vector::Zero(8);
  for (size_t i = 0; i < ds.rows(); ++i) {
    (ds.y[i] ? mean1 : mean0) += ds.X.row(static_cast<Eigen::Index>(i)).transpose() / 4000.0;
  }
  const Vector diff = mean1 - mean0;
  for (size_t j : noninf) EXPECT_LT(std::abs(diff(static_cast<Eigen::Index>(j))), 0.01);
  EXPECT_NEAR(diff.norm(), spec.class_separation, 0.03);

  spec.class_separation = 0;
  const auto flat = synth_generate(spec);
  mean0.setZero();
  mean1.setZero();
  for (size_t i = 0; i < flat.rows(); ++i) {
    (flat.y[i] ? mean1 : mean0) += flat.X.row(static_cast<Eigen::Index>(i)).transpose() / 4000.0;
  }
  EXPECT_LT((mean1 - mean0).cwiseAbs().maxCoeff(), 0.01);
}

TEST(DatasetCsv, RoundTripIsExact) {
  const auto dir = testkit::scratch_dir("ds_roundtrip");
  SynthSpec spec;
  spec.n_per_class = 20;
  spec.m = 5;
  const auto ds = synth_generate(spec);
  save_dataset_csv(ds, dir / "d.csv");
  const auto back = load_dataset_csv(dir / "d.csv");
  EXPECT_TRUE(back.X == ds.X);
  EXPECT_EQ(back.y, ds.y);
  EXPECT_EQ(back.schema, ds.schema);
}

TEST(ScalerJson, RoundTrip) {
  ScalerParams s{{0.1, 2}, {0.9, 4}};
  FeatureSchema schema;
  const auto back = scaler_from_json(scaler_to_json(FeatureSchema({"a", "b"}), s), &schema);
  EXPECT_EQ(back.min, s.min);
  EXPECT_EQ(back.max, s.max);
  EXPECT_EQ(schema.names(), (std::vector<std::string>{"a", "b"}));
}
