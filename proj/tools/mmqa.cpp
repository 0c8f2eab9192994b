#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mmqa/mmqa.hpp"

namespace {

int report(const char* kind, const std::exception& e, mmqa::ExitCode code) {
  std::cerr << "mmqa: " << kind << ": " << e.what() << "\n";
  return static_cast<int>(code);
}

int run_gradcheck() {
  const auto report = mmqa::run_gradcheck_suite();
  double worst = 0.0;
  for (const auto& c : report.cases) {
    std::printf("%-44s %.3e %s\n", c.name.c_str(), c.error, c.passed() ? "ok" : "FAIL");
    worst = std::max(worst, c.error);
  }
  std::printf("max relative error %.3e over %zu cases in %.2f s\n", worst, report.cases.size(), report.seconds);
  return report.passed() ? 0 : static_cast<int>(mmqa::ExitCode::numerical);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal video-dialog question answering: augment, train, eval, generate"};
  app.require_subcommand(1);

  std::string in, out, mode = "per-turn", config, ckpt, data;
  std::size_t factor = 1;
  std::uint64_t seed = 1;

  auto* augment = app.add_subcommand("augment", "Expand a dialog dataset into training examples");
  augment->add_option("--in", in, "Input dataset")->required();
  augment->add_option("--out", out, "Output dataset")->required();
  augment->add_option("--mode", mode, "basic | per-turn | shuffle")
      ->check(CLI::IsMember({"basic", "per-turn", "shuffle"}));
  augment->add_option("--factor", factor, "Shuffle factor (>= 1)");
  augment->add_option("--seed", seed, "Shuffle seed");

  auto* train = app.add_subcommand("train", "Train a model from a run config");
  train->add_option("--config", config, "Run config (JSON)")->required();
  train->add_option("--out", out, "Checkpoint path")->required();

  auto* eval = app.add_subcommand("eval", "Score greedy generations");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--data", data, "Dataset")->required();
  eval->add_option("--out", out, "Scores file")->required();

  auto* generate = app.add_subcommand("generate", "Write one greedy answer per example");
  generate->add_option("--ckpt", ckpt, "Checkpoint")->required();
  generate->add_option("--data", data, "Dataset")->required();
  generate->add_option("--out", out, "Answers file")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(mmqa::ExitCode::validation);
  }

  try {
    if (*augment) {
      mmqa::run_augment(in, out, mmqa::parse_augment_mode(mode), factor, seed);
    } else if (*train) {
      const auto s = mmqa::run_train(mmqa::load_run_config(config), out);
      std::printf("trained on %zu examples, vocabulary %zu, %zu epochs, best epoch %zu, val F1 %.4f\n",
                  s.train_examples, s.vocabulary, s.epochs, s.best_epoch, s.best_f1);
    } else if (*eval) {
      const auto ev = mmqa::run_eval(ckpt, data, out, &std::cerr);
      std::cout << mmqa::format_scores(ev.scores);
    } else if (*generate) {
      mmqa::run_generate(ckpt, data, out);
    } else if (*gradcheck) {
      return run_gradcheck();
    }
  } catch (const mmqa::IoError& e) {
    return report("io error", e, mmqa::ExitCode::io);
  } catch (const mmqa::NumericalError& e) {
    return report("numerical failure", e, mmqa::ExitCode::numerical);
  } catch (const mmqa::ValidationError& e) {
    return report("invalid input", e, mmqa::ExitCode::validation);
  } catch (const nlohmann::json::exception& e) {
    return report("invalid input", e, mmqa::ExitCode::validation);
  }
  return 0;
}
