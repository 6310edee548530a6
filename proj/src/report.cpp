#include "bnnr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <utility>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace bnnr {
namespace {

using nlohmann::json;

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// Two decimals unless more are needed to tell the value apart.
std::string format_epsilon(double eps) {
  for (int d = 2; d < 8; ++d) {
    const std::string s = fixed(eps, d);
    if (std::abs(std::stod(s) - eps) < 1e-12) return s;
  }
  return fixed(eps, 8);
}

bool same_epsilon(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::abs(*a - *b) < 1e-12;
}

std::string condition_header(const ReportCondition& c, bool with_epsilon) {
  if (c.kind != ConditionKind::attack && c.kind != ConditionKind::min_perturbation_attack) return c.name;
  std::string h = c.mean_linf ? format_attack_header(c.name, *c.mean_linf) : c.name;
  if (with_epsilon && c.epsilon) h += "@" + format_epsilon(*c.epsilon);
  return h;
}

std::string cell_text(const EvaluationReport& r, std::size_t m, std::size_t c) {
  const auto& cell = r.cells[m][c];
  return cell ? format_cell(*cell) : "-";
}

void markdown_table(std::ostringstream& out, const EvaluationReport& r, const std::vector<std::size_t>& cols) {
  out << "| Model | Method |";
  for (std::size_t c : cols) out << ' ' << condition_header(r.conditions[c], false) << " |";
  out << "\n|---|---|";
  for (std::size_t i = 0; i < cols.size(); ++i) out << "---|";
  out << '\n';
  for (std::size_t m = 0; m < r.models.size(); ++m) {
    out << "| " << r.models[m].family << " | " << r.models[m].method << " |";
    for (std::size_t c : cols) out << ' ' << cell_text(r, m, c) << " |";
    out << '\n';
  }
}

}  // namespace

std::string to_string(ConditionKind kind) {
  switch (kind) {
    case ConditionKind::clean: return "clean";
    case ConditionKind::perturbation: return "perturbation";
    case ConditionKind::attack: return "attack";
    case ConditionKind::min_perturbation_attack: return "min_perturbation_attack";
  }
  throw std::invalid_argument("unknown condition kind");
}

ConditionKind parse_condition_kind(const std::string& text) {
  for (auto k : {ConditionKind::clean, ConditionKind::perturbation, ConditionKind::attack,
                 ConditionKind::min_perturbation_attack}) {
    if (to_string(k) == text) return k;
  }
  throw std::invalid_argument("unknown condition kind '" + text + "'");
}

std::string to_json_line(const TrainingRecord& r) {
  json j{{"event", "training"},
         {"run_id", r.run_id},
         {"repeat", r.repeat},
         {"seed", r.seed},
         {"model", r.model},
         {"family", r.family},
         {"method", r.method},
         {"wall_clock_seconds", r.wall_clock_seconds},
         {"train_accuracy", r.train_accuracy},
         {"epochs", r.epochs}};
  return j.dump();
}

std::string to_json_line(const EvaluationRecord& r) {
  json j{{"event", "evaluation"},
         {"run_id", r.run_id},
         {"repeat", r.repeat},
         {"seed", r.seed},
         {"model", r.model},
         {"family", r.family},
         {"method", r.method},
         {"condition", r.condition},
         {"kind", to_string(r.kind)},
         {"epsilon", optional_json(r.epsilon)},
         {"accuracy", r.accuracy},
         {"mean_linf", optional_json(r.mean_linf)},
         {"samples", r.samples}};
  return j.dump();
}

RunLog parse_run_log(std::istream& in) {
  RunLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const std::string event = j.at("event").get<std::string>();
      if (event == "training") {
        TrainingRecord r;
        r.run_id = j.at("run_id").get<std::string>();
        r.repeat = j.at("repeat").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.model = j.at("model").get<std::string>();
        r.family = j.at("family").get<std::string>();
        r.method = j.at("method").get<std::string>();
        r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
        r.train_accuracy = j.value("train_accuracy", 0.0);
        r.epochs = j.value("epochs", std::size_t{0});
        log.training.push_back(std::move(r));
      } else if (event == "evaluation") {
        EvaluationRecord r;
        r.run_id = j.at("run_id").get<std::string>();
        r.repeat = j.at("repeat").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.model = j.at("model").get<std::string>();
        r.family = j.at("family").get<std::string>();
        r.method = j.at("method").get<std::string>();
        r.condition = j.at("condition").get<std::string>();
        r.kind = parse_condition_kind(j.at("kind").get<std::string>());
        r.epsilon = optional_field<double>(j, "epsilon");
        r.accuracy = j.at("accuracy").get<double>();
        r.mean_linf = optional_field<double>(j, "mean_linf");
        r.samples = j.value("samples", std::size_t{0});
        log.evaluations.push_back(std::move(r));
      } else {
        throw std::invalid_argument("unknown event '" + event + "'");
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("run log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

RunLog read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run log " + path.string());
  return parse_run_log(in);
}

double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// Welford's update; exact for constant input, so identical repeats give std 0.
static std::pair<double, double> mean_and_ss(std::span<const double> values) {
  double mean = 0.0, ss = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double delta = values[k] - mean;
    mean += delta / static_cast<double>(k + 1);
    ss += delta * (values[k] - mean);
  }
  return {mean, ss};
}

double sample_std(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("standard deviation of an empty list");
  if (values.size() == 1) return 0.0;
  return std::sqrt(mean_and_ss(values).second / static_cast<double>(values.size() - 1));
}

FiveNumberSummary timing_stats(std::span<const double> seconds) {
  if (seconds.empty()) throw std::invalid_argument("timing_stats needs at least one run");
  std::vector<double> v(seconds.begin(), seconds.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  FiveNumberSummary s;
  s.min = v.front();
  s.max = v.back();
  s.median = median(v);
  if (n == 1) {
    s.q1 = s.q3 = v[0];
    return s;
  }
  const std::size_t half = n / 2;
  s.q1 = median(std::span<const double>(v.data(), half));
  s.q3 = median(std::span<const double>(v.data() + (n - half), half));
  return s;
}

std::optional<std::size_t> EvaluationReport::find_model(const std::string& id) const {
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].id == id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> EvaluationReport::find_condition(const std::string& name,
                                                            std::optional<double> epsilon) const {
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    if (conditions[i].name == name && same_epsilon(conditions[i].epsilon, epsilon)) return i;
  }
  return std::nullopt;
}

const ReportCell& EvaluationReport::cell(const std::string& model, const std::string& condition,
                                         std::optional<double> epsilon) const {
  const auto m = find_model(model);
  const auto c = find_condition(condition, epsilon);
  if (!m || !c || !cells[*m][*c]) {
    throw std::out_of_range("report has no cell for model '" + model + "', condition '" + condition + "'");
  }
  return *cells[*m][*c];
}

EvaluationReport aggregate(const RunLog& log) {
  EvaluationReport r;
  auto model_index = [&](const std::string& id, const std::string& family, const std::string& method) {
    if (auto i = r.find_model(id)) return *i;
    r.models.push_back({id, family, method});
    return r.models.size() - 1;
  };
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> acc;
  std::vector<std::vector<double>> linf;
  for (const auto& e : log.evaluations) {
    const std::size_t m = model_index(e.model, e.family, e.method);
    auto c = r.find_condition(e.condition, e.epsilon);
    if (!c) {
      r.conditions.push_back({e.condition, e.kind, e.epsilon, std::nullopt});
      linf.emplace_back();
      c = r.conditions.size() - 1;
    }
    acc[{m, *c}].push_back(100.0 * e.accuracy);
    if (e.mean_linf) linf[*c].push_back(*e.mean_linf);
  }
  std::map<std::size_t, std::vector<double>> times;
  for (const auto& t : log.training) times[model_index(t.model, t.family, t.method)].push_back(t.wall_clock_seconds);

  for (std::size_t c = 0; c < r.conditions.size(); ++c) {
    if (!linf[c].empty()) {
      r.conditions[c].mean_linf = mean_and_ss(linf[c]).first;
    }
  }
  r.cells.assign(r.models.size(), std::vector<std::optional<ReportCell>>(r.conditions.size()));
  for (const auto& [key, values] : acc) {
    ReportCell cell;
    cell.mean = mean_and_ss(values).first;
    cell.std = sample_std(values);
    cell.repeats = values.size();
    r.cells[key.first][key.second] = cell;
  }
  r.timing.assign(r.models.size(), std::nullopt);
  r.timing_runs.assign(r.models.size(), 0);
  for (const auto& [m, values] : times) {
    r.timing[m] = timing_stats(values);
    r.timing_runs[m] = values.size();
  }
  return r;
}

ReportFormat parse_report_format(const std::string& text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "markdown" || text == "md") return ReportFormat::markdown;
  throw std::invalid_argument("unknown report format '" + text + "' (csv or markdown)");
}

std::string format_cell(const ReportCell& cell) { return fixed(cell.mean, 2) + "±" + fixed(cell.std, 2); }

std::string format_attack_header(const std::string& attack, double mean_linf) {
  return attack + "/" + fixed(mean_linf, 3);
}

std::string emit_report(const EvaluationReport& report, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::csv) {
    out << "Model,Method";
    for (const auto& c : report.conditions) out << ',' << condition_header(c, true);
    out << '\n';
    if (report.conditions.empty()) return out.str();
    for (std::size_t m = 0; m < report.models.size(); ++m) {
      out << report.models[m].family << ',' << report.models[m].method;
      for (std::size_t c = 0; c < report.conditions.size(); ++c) out << ',' << cell_text(report, m, c);
      out << '\n';
    }
    return out.str();
  }

  if (report.conditions.empty()) {
    out << "| Model | Method |\n|---|---|\n";
    return out.str();
  }
  std::vector<std::size_t> inputs, min_attacks;
  std::vector<double> epsilons;
  for (std::size_t c = 0; c < report.conditions.size(); ++c) {
    const auto& cond = report.conditions[c];
    if (cond.kind == ConditionKind::clean || cond.kind == ConditionKind::perturbation) {
      inputs.push_back(c);
    } else if (cond.kind == ConditionKind::min_perturbation_attack || !cond.epsilon) {
      min_attacks.push_back(c);
    } else if (std::none_of(epsilons.begin(), epsilons.end(),
                            [&](double e) { return std::abs(e - *cond.epsilon) < 1e-12; })) {
      epsilons.push_back(*cond.epsilon);
    }
  }
  bool first = true;
  auto section = [&](const std::string& title) {
    if (!first) out << '\n';
    first = false;
    out << "## " << title << "\n\n";
  };
  if (!inputs.empty()) {
    section("Input perturbations (accuracy %)");
    markdown_table(out, report, inputs);
  }
  for (double eps : epsilons) {
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < report.conditions.size(); ++c) {
      const auto& cond = report.conditions[c];
      if (cond.kind == ConditionKind::attack && cond.epsilon && std::abs(*cond.epsilon - eps) < 1e-12) {
        cols.push_back(c);
      }
    }
    cols.insert(cols.end(), min_attacks.begin(), min_attacks.end());
    section("Adversarial attacks, L∞ ε = " + format_epsilon(eps) + " (accuracy %, header: attack/mean L∞ distance)");
    markdown_table(out, report, cols);
  }
  if (epsilons.empty() && !min_attacks.empty()) {
    section("Minimum-perturbation attacks (accuracy %, header: attack/mean L∞ distance)");
    markdown_table(out, report, min_attacks);
  }
  if (std::any_of(report.timing.begin(), report.timing.end(), [](const auto& t) { return t.has_value(); })) {
    section("Training wall-clock (s)");
    out << emit_timing(report, ReportFormat::markdown);
  }
  return out.str();
}

std::string emit_timing(const EvaluationReport& report, ReportFormat format) {
  std::ostringstream out;
  const bool csv = format == ReportFormat::csv;
  out << (csv ? "Model,Method,Runs,Min,Q1,Median,Q3,Max\n"
              : "| Model | Method | Runs | Min | Q1 | Median | Q3 | Max |\n|---|---|---|---|---|---|---|---|\n");
  for (std::size_t m = 0; m < report.models.size(); ++m) {
    if (m >= report.timing.size() || !report.timing[m]) continue;
    const auto& t = *report.timing[m];
    const std::vector<std::string> fields{report.models[m].family, report.models[m].method,
                                          std::to_string(report.timing_runs[m]), fixed(t.min, 3), fixed(t.q1, 3),
                                          fixed(t.median, 3), fixed(t.q3, 3), fixed(t.max, 3)};
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (csv) {
        out << (i ? "," : "") << fields[i];
      } else {
        out << (i ? " " : "| ") << fields[i] << " |";
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace bnnr
