#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plume/errors.hpp"
#include "plume/harness.hpp"

namespace {

plume::ExecPolicy policy_from(bool serial) {
  return serial ? plume::ExecPolicy::serial : plume::ExecPolicy::parallel;
}

void print_summary(const std::vector<plume::RunRecord>& records) {
  std::cout << plume::format_summary(plume::summarize(records));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PLUME search: learned initial assignments for QAP tabu search"};
  app.require_subcommand(1);

  // gen
  plume::GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a seeded instance file");
  gen_cmd->add_option("--n", gen.n, "Problem size")->required();
  gen_cmd->add_option("--p", gen.p, "Flow edge density")->required();
  gen_cmd->add_option("--count", gen.count, "Number of instances")->required();
  gen_cmd->add_option("--seed", gen.seed, "Base seed")->required();
  gen_cmd->add_option("--out", gen.out, "Output JSONL path")->required();

  // train
  plume::TrainOptions tr;
  std::string log_csv;
  bool train_serial = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write the best checkpoint");
  train_cmd->add_option("--train", tr.train_path, "Training instances")->required();
  train_cmd->add_option("--val", tr.val_path, "Validation instances")->required();
  train_cmd->add_option("--out", tr.out_ckpt, "Checkpoint path")->required();
  train_cmd->add_option("--log", log_csv, "Per-epoch CSV log");
  train_cmd->add_option("--seed", tr.cfg.seed, "Training seed")->capture_default_str();
  train_cmd->add_option("--epochs", tr.cfg.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.cfg.batch_size, "Batch size")->capture_default_str();
  train_cmd->add_option("--lr", tr.cfg.optim.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--weight-decay", tr.cfg.optim.weight_decay, "AdamW weight decay")->capture_default_str();
  train_cmd->add_option("--d", tr.cfg.model.d, "Embedding width")->capture_default_str();
  train_cmd->add_option("--layers", tr.cfg.model.n_layers, "Fusion layers")->capture_default_str();
  train_cmd->add_option("--alpha", tr.cfg.model.alpha, "Logit scale")->capture_default_str();
  train_cmd->add_option("--tau", tr.cfg.model.gs.tau, "Sinkhorn temperature")->capture_default_str();
  train_cmd->add_option("--sinkhorn-iters", tr.cfg.model.gs.iters, "Sinkhorn sweeps")->capture_default_str();
  train_cmd->add_option("--gamma", tr.cfg.model.gs.gamma, "Gumbel noise scale")->capture_default_str();
  train_cmd->add_flag("--serial", train_serial, "Disable the parallel batch kernels");

  // eval-init
  plume::EvalInitOptions ev;
  std::string ev_csv;
  bool ev_serial = false;
  auto* eval_cmd = app.add_subcommand("eval-init", "Compare UL and random initial assignments");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "Instances")->required();
  eval_cmd->add_option("--seed", ev.seed, "Run seed")->capture_default_str();
  eval_cmd->add_option("--csv", ev_csv, "Output CSV")->required();
  eval_cmd->add_flag("--serial", ev_serial, "Disable the parallel map");

  // search
  plume::SearchOptions se;
  std::string se_init = "random";
  std::string se_ckpt;
  std::string se_csv;
  bool se_serial = false;
  auto* search_cmd = app.add_subcommand("search", "Run tabu search from random or UL initial assignments");
  search_cmd->add_option("--data", se.data, "Instances")->required();
  search_cmd->add_option("--init", se_init, "random or ckpt")
      ->check(CLI::IsMember({"random", "ckpt"}))
      ->capture_default_str();
  search_cmd->add_option("--ckpt", se_ckpt, "Checkpoint (with --init ckpt)");
  search_cmd->add_option("--mu", se.ts.evaluations, "Swap-delta evaluation budget")->capture_default_str();
  search_cmd->add_option("--kappa", se.ts.neighbourhood_size, "Swaps sampled per iteration")->capture_default_str();
  search_cmd->add_option("--omega", se.ts.max_fails, "Consecutive non-improving iterations")->capture_default_str();
  search_cmd->add_option("--seed", se.seed, "Run seed")->capture_default_str();
  search_cmd->add_option("--csv", se_csv, "Output CSV")->required();
  search_cmd->add_flag("--serial", se_serial, "Disable the parallel map");

  // report
  plume::ReportOptions rep;
  std::string rep_csv;
  auto* report_cmd = app.add_subcommand("report", "Summarize one or more record CSVs");
  report_cmd->add_option("csvs", rep.csvs, "Record CSV files")->required();
  report_cmd->add_option("--csv", rep_csv, "Also write the summary as CSV");

  // generalize
  plume::GeneralizeOptions gz;
  std::vector<std::string> gz_ts;
  std::string gz_csv;
  bool gz_serial = false;
  auto* gen_cmd2 = app.add_subcommand("generalize", "Apply a checkpoint to instances of another n or p");
  gen_cmd2->add_option("--ckpt", gz.ckpt, "Checkpoint")->required();
  gen_cmd2->add_option("--data", gz.data, "Instance files")->required();
  gen_cmd2->add_option("--ts", gz_ts, "Search configs as mu,kappa,omega (repeatable)");
  gen_cmd2->add_option("--seed", gz.seed, "Run seed")->capture_default_str();
  gen_cmd2->add_option("--csv", gz_csv, "Output CSV")->required();
  gen_cmd2->add_flag("--serial", gz_serial, "Disable the parallel map");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) {
      const auto set = plume::cmd_gen(gen);
      std::cerr << "wrote " << set.instances.size() << " instances to " << gen.out << '\n';
    } else if (train_cmd->parsed()) {
      if (!log_csv.empty()) tr.log_csv = log_csv;
      tr.cfg.policy = policy_from(train_serial);
      const auto ckpt = plume::cmd_train(tr, &std::cout);
      std::cerr << "best epoch " << ckpt.meta.epoch << " val_score " << ckpt.meta.val_score << " -> "
                << tr.out_ckpt << '\n';
    } else if (eval_cmd->parsed()) {
      ev.csv_out = ev_csv;
      ev.policy = policy_from(ev_serial);
      print_summary(plume::cmd_eval_init(ev));
    } else if (search_cmd->parsed()) {
      if (se_init == "ckpt") {
        if (se_ckpt.empty()) throw plume::Error("--init ckpt requires --ckpt");
        se.ckpt = se_ckpt;
      }
      se.csv_out = se_csv;
      se.policy = policy_from(se_serial);
      print_summary(plume::cmd_search(se));
    } else if (report_cmd->parsed()) {
      if (!rep_csv.empty()) rep.csv_out = rep_csv;
      std::cout << plume::cmd_report(rep);
    } else if (gen_cmd2->parsed()) {
      for (const auto& t : gz_ts) gz.ts.push_back(plume::TsSpec::parse(t));
      gz.csv_out = gz_csv;
      gz.policy = policy_from(gz_serial);
      print_summary(plume::cmd_generalize(gz));
    }
  } catch (const plume::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
