#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "plume/parallel.hpp"
#include "plume/training.hpp"

namespace plume {

// One row of experiment output. The first ten fields are the fixed CSV
// schema; generalization runs append train_n, train_p and stage.
struct RunRecord {
  std::size_t instance_id = 0;
  std::size_t n = 0;
  double p = 0.0;
  std::string init_type;  // "random" or "ul"
  double init_cost = 0.0;
  double final_cost = 0.0;
  std::uint64_t evaluations_used = 0;
  double wall_ms_search = 0.0;
  double wall_ms_inference = 0.0;
  std::uint64_t seed = 0;

  std::optional<std::size_t> train_n;
  std::optional<double> train_p;
  std::string stage;

  bool has_generalization_fields() const { return train_n.has_value(); }
};

inline constexpr const char* kRunRecordHeader =
    "instance_id,n,p,init_type,init_cost,final_cost,evaluations_used,wall_ms_search,"
    "wall_ms_inference,seed";
inline constexpr const char* kGeneralizeExtraHeader = "train_n,train_p,stage";

void write_records(const std::vector<RunRecord>& records, const std::filesystem::path& path);
std::vector<RunRecord> read_records(const std::filesystem::path& path);

// Throws Error when a record breaks its invariants (unknown init type,
// final > init after a search, negative wall time).
void verify_record(const RunRecord& r);

struct GroupSummary {
  std::string stage;
  std::optional<std::size_t> train_n;
  std::optional<double> train_p;
  std::size_t n = 0;
  double p = 0.0;
  std::string init_type;
  std::size_t count = 0;
  double mean_init = 0.0;
  double mean_final = 0.0;
  double mean_evaluations = 0.0;
  double mean_wall_ms_search = 0.0;
  double mean_wall_ms_inference = 0.0;
};

// UL against random for one (stage, train config, n, p) cell. Gaps are
// 1 - mean(UL) / mean(random); a zero baseline gives gap 0.
struct PairSummary {
  std::string stage;
  std::optional<std::size_t> train_n;
  std::optional<double> train_p;
  std::size_t n = 0;
  double p = 0.0;
  std::size_t ul_count = 0;
  std::size_t random_count = 0;
  double ul_init = 0.0;
  double random_init = 0.0;
  double gap_init = 0.0;
  double ul_final = 0.0;
  double random_final = 0.0;
  double gap_final = 0.0;
};

struct BenchSummary {
  std::vector<GroupSummary> groups;
  std::vector<PairSummary> pairs;
};

// Order-independent: every mean is taken over sorted values.
BenchSummary summarize(const std::vector<RunRecord>& records);

// Gap with the degenerate rule baseline == 0 -> 0.
double safe_gap(double cost_pred, double cost_baseline);

std::string format_summary(const BenchSummary& s);
void write_summary_csv(const BenchSummary& s, const std::filesystem::path& path);

// Search-budget triple (mu, kappa, omega).
struct TsSpec {
  std::uint64_t evaluations = 1000;
  std::size_t neighbourhood_size = 25;
  std::size_t max_fails = 25;

  std::string label() const;
  static TsSpec parse(const std::string& text);  // "mu,kappa,omega"
};

// Per-instance seeds derive from the run seed and the instance's own
// generation seed, so results do not depend on file order.
std::uint64_t random_init_seed(std::uint64_t run_seed, const QapInstance& inst);
std::uint64_t search_seed(std::uint64_t run_seed, const QapInstance& inst);

struct GenOptions {
  std::size_t n = 20;
  double p = 0.5;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};
InstanceSet cmd_gen(const GenOptions& opt);

struct TrainOptions {
  std::filesystem::path train_path;
  std::filesystem::path val_path;
  std::filesystem::path out_ckpt;
  std::optional<std::filesystem::path> log_csv;
  TrainConfig cfg{};
};
// Echoes "epoch,train_loss,val_score,best,wall_ms" rows to `echo` and to
// log_csv when given.
ModelCheckpoint cmd_train(const TrainOptions& opt, std::ostream* echo = nullptr);

struct EvalInitOptions {
  std::filesystem::path ckpt;
  std::filesystem::path data;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> csv_out;
  ExecPolicy policy = ExecPolicy::parallel;
};
// Two records per instance (UL decode, seeded random), UL first.
std::vector<RunRecord> cmd_eval_init(const EvalInitOptions& opt);

struct SearchOptions {
  std::filesystem::path data;
  std::optional<std::filesystem::path> ckpt;  // UL init when set, random otherwise
  TsSpec ts{};
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> csv_out;
  ExecPolicy policy = ExecPolicy::parallel;
};
std::vector<RunRecord> cmd_search(const SearchOptions& opt);

struct ReportOptions {
  std::vector<std::filesystem::path> csvs;
  std::optional<std::filesystem::path> csv_out;
};
std::string cmd_report(const ReportOptions& opt);

struct GeneralizeOptions {
  std::filesystem::path ckpt;
  std::vector<std::filesystem::path> data;
  std::vector<TsSpec> ts;  // searches to run from both inits, besides the init-only stage
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> csv_out;
  ExecPolicy policy = ExecPolicy::parallel;
};
std::vector<RunRecord> cmd_generalize(const GeneralizeOptions& opt);

// Lower-level pieces shared by the commands and the benchmarks.
std::vector<RunRecord> eval_init_records(const ModelCheckpoint& ckpt,
                                         const std::vector<QapInstance>& instances,
                                         std::uint64_t seed, ExecPolicy policy);
std::vector<RunRecord> search_records(const std::vector<QapInstance>& instances,
                                      const ModelCheckpoint* ckpt, const TsSpec& ts,
                                      std::uint64_t seed, ExecPolicy policy);

}  // namespace plume
