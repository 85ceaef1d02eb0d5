// coreg: train, evaluate, sweep, render and report registration experiments.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "coreg/experiments.hpp"
#include "coreg/fields.hpp"

namespace {

using namespace coreg;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string only;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment JSON (one experiment or {\"experiments\": [...]})")->required();
  cmd->add_option("--seed", c.seed, "override the training seed");
  cmd->add_option("--only", c.only, "run only the experiment with this name");
}

std::vector<ExperimentSpec> selected_specs(const Common& c) {
  auto specs = load_experiment_specs(c.config);
  std::vector<ExperimentSpec> out;
  for (auto& s : specs) {
    if (!c.only.empty() && s.name != c.only) continue;
    if (c.seed) s.train.seed = *c.seed;
    out.push_back(std::move(s));
  }
  if (out.empty()) throw std::invalid_argument("no experiment named '" + c.only + "' in " + c.config);
  return out;
}

void print_row(const ReportRow& r) {
  std::cout << r.dataset << "  " << r.method << "  ae_error=" << r.ae_error_pct << "%  dice=" << r.dice
            << "  landmark_error=" << r.landmark_error_pct << "%  runtime=" << r.test_runtime_sec << "s\n";
}

HistoryCallback progress(const std::string& name) {
  return [name](const HistoryRecord& r) {
    std::cerr << "[" << name << "] it " << r.iteration << " phase " << r.phase << " matching " << r.matching
              << " smoothness " << r.smoothness << " cae_recon " << r.cae_recon << '\n';
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative-autoencoder image registration experiments"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress training progress");

  Common train_opts, eval_opts, run_opts, sweep_opts, render_opts, report_opts;
  auto* train_cmd = app.add_subcommand("train", "train and write config, checkpoint and history");
  add_common(train_cmd, train_opts);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained checkpoint on the test split");
  add_common(eval_cmd, eval_opts);
  auto* run_cmd = app.add_subcommand("run", "train then evaluate");
  add_common(run_cmd, run_opts);

  auto* sweep_cmd = app.add_subcommand("sweep", "latent sweep of an h=1 CAE model against the centred target");
  add_common(sweep_cmd, sweep_opts);
  int n_sources = 100;
  std::string sweep_out;
  sweep_cmd->add_option("--n-sources", n_sources, "number of uniformly spaced sources")->check(CLI::Range(2, 100000));
  sweep_cmd->add_option("--out", sweep_out, "output directory (default <output_dir>/../<name>_sweep)");

  auto* render_cmd = app.add_subcommand("render", "false-colour overlay of one test pair");
  add_common(render_cmd, render_opts);
  std::size_t pair_index = 0;
  std::string render_out;
  render_cmd->add_option("--pair", pair_index, "index into the test split");
  render_cmd->add_option("--out", render_out, "PNG path")->required();

  auto* report_cmd = app.add_subcommand("report", "collect eval.csv of every experiment into one table");
  add_common(report_cmd, report_opts);
  std::string report_out;
  report_cmd->add_option("--out", report_out, "CSV path; an aligned .txt table is written alongside")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed() || run_cmd->parsed()) {
      const bool evaluate = run_cmd->parsed();
      for (const auto& spec : selected_specs(evaluate ? run_opts : train_opts)) {
        const auto cb = quiet ? HistoryCallback{} : progress(spec.name);
        if (evaluate) {
          print_row(run_experiment(spec, cb));
        } else {
          const PairDataset dataset = build_experiment_dataset(spec);
          train_experiment(spec, dataset, cb);
          std::cout << spec.name << ": trained, checkpoint in " << (spec.output_dir / "checkpoint").string() << '\n';
        }
      }
    } else if (eval_cmd->parsed()) {
      for (const auto& spec : selected_specs(eval_opts)) {
        const TrainedModel model = load_checkpoint(spec.output_dir / "checkpoint");
        print_row(evaluate_experiment(spec, model, build_experiment_dataset(spec)));
      }
    } else if (sweep_cmd->parsed()) {
      for (const auto& spec : selected_specs(sweep_opts)) {
        if (spec.method != Method::cae) continue;
        const TrainedModel model = load_checkpoint(spec.output_dir / "checkpoint");
        const std::filesystem::path out =
            sweep_out.empty() ? spec.output_dir.parent_path() / (spec.name + "_sweep") : std::filesystem::path(sweep_out);
        std::filesystem::create_directories(out);
        const auto points = latent_sweep(model, spec.dataset.family, n_sources, out / "strip.png");
        write_sweep_csv(out / "sweep.csv", points);
        std::vector<double> params, latents;
        for (const auto& p : points) {
          params.push_back(p.param);
          latents.push_back(p.latent);
        }
        std::cout << spec.name << ": spearman " << spearman(params, latents) << ", table in "
                  << (out / "sweep.csv").string() << '\n';
      }
    } else if (render_cmd->parsed()) {
      const auto specs = selected_specs(render_opts);
      const auto& spec = specs.front();
      const TrainedModel model = load_checkpoint(spec.output_dir / "checkpoint");
      const PairDataset dataset = build_experiment_dataset(spec);
      if (pair_index >= dataset.test.size()) throw std::invalid_argument("--pair is outside the test split");
      const auto& pair = dataset.test[pair_index];
      const Image& source = dataset.source(pair).image;
      const Image& target = dataset.target(pair).image;
      const Image registered = warp_image(source, primary_forward(model.primary, source, target));
      write_png(render_out, render_falsecolor(target, registered));
      std::cout << "wrote " << render_out << '\n';
    } else if (report_cmd->parsed()) {
      std::vector<ReportRow> rows;
      for (const auto& spec : selected_specs(report_opts)) {
        for (auto& r : read_report_csv(spec.output_dir / "eval.csv")) rows.push_back(std::move(r));
      }
      emit_report(rows, report_out);
      std::ifstream table(std::filesystem::path(report_out).replace_extension(".txt"));
      std::cout << table.rdbuf();
    }
  } catch (const std::exception& e) {
    std::cerr << "coreg: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
