#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bnnr {

enum class ConditionKind { clean, perturbation, attack, min_perturbation_attack };

std::string to_string(ConditionKind kind);
ConditionKind parse_condition_kind(const std::string& text);

// One accuracy measurement: model x condition in one repeat.
struct EvaluationRecord {
  std::string run_id;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::string model;   // unique model id within the plan
  std::string family;  // CNN / BNN / F-BNN
  std::string method;  // "Baseline" for the CNN
  std::string condition;
  ConditionKind kind = ConditionKind::clean;
  std::optional<double> epsilon;
  double accuracy = 0.0;  // fraction in [0, 1]
  std::optional<double> mean_linf;
  std::size_t samples = 0;
};

struct TrainingRecord {
  std::string run_id;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::string model;
  std::string family;
  std::string method;
  double wall_clock_seconds = 0.0;
  double train_accuracy = 0.0;
  std::size_t epochs = 0;
};

struct RunLog {
  std::vector<TrainingRecord> training;
  std::vector<EvaluationRecord> evaluations;
};

// JSON lines: {"event": "training" | "evaluation", ...}.
std::string to_json_line(const TrainingRecord& record);
std::string to_json_line(const EvaluationRecord& record);
RunLog parse_run_log(std::istream& in);
RunLog read_run_log(const std::filesystem::path& path);

// Tukey hinges: quartiles are medians of the lower and upper halves, the
// overall median excluded from both halves when the count is odd.
struct FiveNumberSummary {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};
FiveNumberSummary timing_stats(std::span<const double> seconds);

double median(std::span<const double> values);
// Sample standard deviation (n - 1 denominator); 0 for a single value.
double sample_std(std::span<const double> values);

struct ReportModel {
  std::string id;
  std::string family;
  std::string method;
};

struct ReportCondition {
  std::string name;
  ConditionKind kind = ConditionKind::clean;
  std::optional<double> epsilon;
  std::optional<double> mean_linf;  // attacks only, averaged over repeats
};

struct ReportCell {
  double mean = 0.0;  // accuracy in percent
  double std = 0.0;
  std::size_t repeats = 0;
};

struct EvaluationReport {
  std::vector<ReportModel> models;
  std::vector<ReportCondition> conditions;
  // cells[m][c]; empty when a model was not evaluated on a condition.
  std::vector<std::vector<std::optional<ReportCell>>> cells;
  // Per model, present when training records exist.
  std::vector<std::optional<FiveNumberSummary>> timing;
  std::vector<std::size_t> timing_runs;

  std::optional<std::size_t> find_model(const std::string& id) const;
  std::optional<std::size_t> find_condition(const std::string& name, std::optional<double> epsilon) const;
  // Throws std::out_of_range when the cell is missing.
  const ReportCell& cell(const std::string& model, const std::string& condition,
                         std::optional<double> epsilon = std::nullopt) const;
};

// Models and conditions appear in order of first appearance in the log.
EvaluationReport aggregate(const RunLog& log);

enum class ReportFormat { csv, markdown };
ReportFormat parse_report_format(const std::string& text);

// "96.28±0.69"
std::string format_cell(const ReportCell& cell);
// "PGD/0.056"
std::string format_attack_header(const std::string& attack, double mean_linf);

// Accuracy tables. Markdown: one table for clean and perturbed inputs, one
// per epsilon for attacks (minimum-perturbation attacks are repeated in each),
// then a training-time table. CSV: a single wide table.
std::string emit_report(const EvaluationReport& report, ReportFormat format);
// Training wall-clock five-number summaries, seconds.
std::string emit_timing(const EvaluationReport& report, ReportFormat format);

}  // namespace bnnr
