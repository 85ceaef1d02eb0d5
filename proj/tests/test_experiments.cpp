#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "coreg/experiments.hpp"

using namespace coreg;
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::uint8_t, 3> kWhite{255, 255, 255}, kBlack{0, 0, 0}, kGreen{0, 255, 0},
    kMagenta{255, 0, 255};

Image block(int top, int left, int h, int w) {
  Image img(16, 16, 0.0);
  for (int r = top; r < top + h; ++r)
    for (int c = left; c < left + w; ++c) img.at(r, c) = 1.0;
  return img;
}

int count(const RgbImage& img, std::array<std::uint8_t, 3> rgb) {
  int n = 0;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) n += img.get(r, c) == rgb;
  return n;
}

ExperimentSpec tiny_spec(Method method, const fs::path& out) {
  ExperimentSpec s;
  s.name = "tiny";
  s.method = method;
  s.output_dir = out;
  s.dataset = {ShapeFamily::linear, 4, 2, std::nullopt};
  s.train.total_iterations = 40;
  s.train.batch_size = 2;
  s.train.learning_rate = 1e-3;
  s.train.seed = 3;
  s.train.primary.levels = 2;
  s.train.primary.base_channels = 4;
  if (method == Method::cae) {
    CAEConfig cae;
    cae.base_channels = 4;
    s.train.cae = cae;
  }
  if (method == Method::undr_bn || method == Method::undr_bn_noskip) s.train.primary.bottleneck_dim = 1;
  if (method == Method::undr_bn_noskip) s.train.primary.skip_connections = false;
  s.posthoc.iterations = 30;
  s.posthoc.levels = 2;
  s.posthoc.base_channels = 4;
  s.posthoc.batch_size = 2;
  s.posthoc.learning_rate = 1e-3;
  return s;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("coreg_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("falsecolor overlay") {
  const Image a = block(2, 2, 6, 6);
  SUBCASE("perfect registration is only white and black") {
    const RgbImage img = render_falsecolor(a, a);
    CHECK(count(img, kWhite) == 36);
    CHECK(count(img, kBlack) == 256 - 36);
  }
  SUBCASE("disjoint shapes have no white") {
    const RgbImage img = render_falsecolor(a, block(10, 10, 4, 4));
    CHECK(count(img, kWhite) == 0);
    CHECK(count(img, kMagenta) == 36);
    CHECK(count(img, kGreen) == 16);
  }
  SUBCASE("half-overlapping squares") {
    // Registered is shifted 3 columns: 18 shared pixels, 18 on each side.
    const RgbImage img = render_falsecolor(a, block(2, 5, 6, 6));
    CHECK(count(img, kWhite) == 18);
    CHECK(count(img, kGreen) == 18);
    CHECK(count(img, kMagenta) == 18);
  }
  CHECK_THROWS_AS(render_falsecolor(a, Image(16, 15)), std::invalid_argument);
}

TEST_CASE("deformed grid") {
  const Image grid = render_deformed_grid(DisplacementField(16, 16), 4);
  CHECK(grid.at(0, 3) == 1.0);
  CHECK(grid.at(4, 1) == 1.0);
  CHECK(grid.at(1, 1) == 0.0);
  // A constant shift of the sampling positions moves the lines.
  const Image shifted = render_deformed_grid(DisplacementField::uniform(16, 16, 1.0, 1.0), 4);
  CHECK(shifted.at(3, 1) == 1.0);
  CHECK(shifted.at(4, 1) == 0.0);
}

TEST_CASE("report emission") {
  const fs::path dir = scratch("report");
  fs::create_directories(dir);
  SUBCASE("one row gives header plus one line") {
    emit_report({{"linear", "UnDR", 66.4, 0.97, 124.0, 0.019}}, dir / "one.csv");
    std::ifstream in(dir / "one.csv");
    std::string line;
    int lines = 0;
    std::getline(in, line);
    CHECK(line == "dataset,method,ae_error_pct,dice,landmark_error_pct,test_runtime_sec");
    do ++lines; while (std::getline(in, line));
    CHECK(lines == 2);
    CHECK(fs::exists(dir / "one.txt"));
  }
  SUBCASE("rows are sorted and round-trip at 6 significant digits") {
    std::vector<ReportRow> rows{{"rotating", "UnDR", 1.0, 0.9, 3.0, 0.01},
                                {"linear", "UnDR", 66.412345678, 0.9712345, 124.123456, 0.0191234},
                                {"linear", "CAE h=1 beta=8", 6.8, 0.98, 26.0, 0.0187}};
    emit_report(rows, dir / "many.csv");
    const auto back = read_report_csv(dir / "many.csv");
    REQUIRE(back.size() == 3);
    CHECK(back[0].method == "CAE h=1 beta=8");
    CHECK(back[1].dataset == "linear");
    CHECK(back[1].method == "UnDR");
    CHECK(back[2].dataset == "rotating");
    CHECK(back[1].ae_error_pct == doctest::Approx(66.4123).epsilon(1e-9));
    CHECK(back[1].dice == doctest::Approx(0.971235).epsilon(1e-9));
    CHECK(back[1].test_runtime_sec == doctest::Approx(0.0191234).epsilon(1e-9));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(emit_report({}, dir / "empty.csv"), std::invalid_argument);
    std::ofstream(dir / "blocker") << "file, not a directory";
    CHECK_THROWS_AS(emit_report({{"a", "b", 0, 0, 0, 0}}, dir / "blocker" / "x.csv"), IoError);
  }
  fs::remove_all(dir);
}

TEST_CASE("experiment spec validation and JSON") {
  const fs::path out = "unused";
  for (Method m : {Method::cae, Method::undr, Method::undr_bn, Method::undr_bn_noskip}) {
    const ExperimentSpec s = tiny_spec(m, out);
    CHECK_NOTHROW(s.validate());
    CHECK(parse_method(to_string(m)) == m);
    const nlohmann::json j = s;
    const ExperimentSpec back = j.get<ExperimentSpec>();
    CHECK(back.train == s.train);
    CHECK(back.dataset == s.dataset);
    CHECK(back.method == s.method);
    CHECK(back.posthoc.iterations == s.posthoc.iterations);
  }
  ExperimentSpec s = tiny_spec(Method::undr, out);
  s.train.cae = CAEConfig{};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = tiny_spec(Method::undr_bn_noskip, out);
  s.train.primary.skip_connections = true;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = tiny_spec(Method::cae, out);
  s.train.cae.reset();
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_AS(parse_method("voxelmorph"), std::invalid_argument);

  SUBCASE("labels") {
    CHECK(method_label(tiny_spec(Method::cae, out)) == "CAE h=1 beta=8");
    CHECK(method_label(tiny_spec(Method::undr, out)) == "UnDR");
    CHECK(method_label(tiny_spec(Method::undr_bn, out)) == "UnDR-BN h=1");
    CHECK(method_label(tiny_spec(Method::undr_bn_noskip, out)) == "UnDR-BN-noskip h=1");
  }
  SUBCASE("manifest file") {
    const fs::path dir = scratch("specs");
    fs::create_directories(dir);
    nlohmann::json list;
    list["experiments"] = {nlohmann::json(tiny_spec(Method::cae, out)), nlohmann::json(tiny_spec(Method::undr, out))};
    std::ofstream(dir / "all.json") << list.dump(2);
    CHECK(load_experiment_specs(dir / "all.json").size() == 2);
    std::ofstream(dir / "bad.json") << R"({"name": "x", "method": "undr", "output_dir": "o", "colour": 1})";
    CHECK_THROWS_AS(load_experiment_specs(dir / "bad.json"), std::invalid_argument);
    CHECK_THROWS_AS(load_experiment_specs(dir / "absent.json"), IoError);
    fs::remove_all(dir);
  }
}

TEST_CASE("run_experiment writes the full manifest and is deterministic") {
  const fs::path dir = scratch("run_cae");
  const ExperimentSpec spec = tiny_spec(Method::cae, dir);
  const ReportRow row = run_experiment(spec);
  CHECK(row.dataset == "linear");
  CHECK(row.method == "CAE h=1 beta=8");
  CHECK(row.dice >= 0.0);
  CHECK(row.dice <= 1.0);
  CHECK(row.ae_error_pct >= 0.0);
  for (const char* name : {"config.json", "checkpoint", "history.csv", "eval.csv", "figures"}) {
    INFO(name);
    CHECK(fs::exists(dir / name));
  }
  CHECK(fs::exists(dir / "figures" / "test_pairs.png"));
  const TrainedModel loaded = load_checkpoint(dir / "checkpoint");
  CHECK(loaded.config == spec.train);

  const ReportRow again = run_experiment(spec);
  CHECK(again.ae_error_pct == row.ae_error_pct);
  CHECK(again.dice == row.dice);
  CHECK(again.landmark_error_pct == row.landmark_error_pct);

  SUBCASE("latent sweep") {
    const fs::path strip = dir / "figures" / "sweep.png";
    const auto points = latent_sweep(loaded, ShapeFamily::linear, 100, strip);
    CHECK(points.size() == 100);
    CHECK(points.front().param == 0.0);
    CHECK(points.back().param == 1.0);
    CHECK(fs::exists(strip));
  }
  fs::remove_all(dir);
}

TEST_CASE("baseline experiments use a post-hoc autoencoder") {
  const fs::path dir = scratch("run_undr");
  ExperimentSpec spec = tiny_spec(Method::undr, dir);
  spec.comparison_h = 2;
  const ReportRow row = run_experiment(spec);
  CHECK(row.method == "UnDR");
  CHECK(row.ae_error_pct >= 0.0);
  CHECK_THROWS_AS(latent_sweep(load_checkpoint(dir / "checkpoint"), ShapeFamily::linear, 10), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("errors carry the experiment name") {
  ExperimentSpec spec = tiny_spec(Method::undr, scratch("run_bad"));
  spec.name = "broken-run";
  spec.train.learning_rate = 1e30;
  try {
    run_experiment(spec);
    FAIL("expected failure");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("broken-run") != std::string::npos);
  }
  fs::remove_all(spec.output_dir);
}
