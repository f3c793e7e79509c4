#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "pcil/checkpoint.hpp"
#include "pcil/config.hpp"
#include "pcil/data.hpp"
#include "pcil/svg.hpp"
#include "pcil/trainer.hpp"

namespace fs = std::filesystem;
using namespace pcil;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool no_agc = false, no_gaa = false, no_sfc = false;
  std::size_t states = 0;
  long exemplars = -1;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool run_flags) {
  cmd->add_option("--config", a.config_path, "key=value settings file");
  cmd->add_option("--set", a.sets, "override a single key, e.g. --set epochs=5")
      ->expected(-1)
      ->allow_extra_args(false);
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--seed", a.seed, "random seed")->each([&a](const std::string&) {
    a.seed_given = true;
  });
  if (run_flags) {
    cmd->add_flag("--no-agc", a.no_agc, "freeze centroids at their farthest-point seeds");
    cmd->add_flag("--no-gaa", a.no_gaa, "skip the channel attention gate");
    cmd->add_flag("--no-sfc", a.no_sfc, "report raw scores without fairness compensation");
    cmd->add_option("--states", a.states, "split the classes evenly into this many states");
    cmd->add_option("--exemplars", a.exemplars, "total exemplar memory budget");
  }
}

std::vector<std::size_t> even_schedule(std::size_t classes, std::size_t states) {
  if (states == 0 || states > classes) {
    throw ConfigError("cannot split " + std::to_string(classes) + " classes into " +
                      std::to_string(states) + " states");
  }
  std::vector<std::size_t> schedule(states, classes / states);
  for (std::size_t i = 0; i < classes % states; ++i) ++schedule[i];
  return schedule;
}

CliConfig resolve_config(const CommonArgs& a, bool generating) {
  CliConfig cfg;
  if (!a.config_path.empty()) cfg.apply(parse_kv_file(a.config_path));
  std::map<std::string, std::string> overrides;
  for (const std::string& s : a.sets) {
    std::istringstream ss(s);
    auto kv = parse_kv(ss);
    for (auto& [k, v] : kv) {
      if (overrides.count(k)) throw ConfigError("--set names key '" + k + "' twice");
      overrides[k] = v;
    }
  }
  cfg.apply(overrides);
  if (a.seed_given) {
    // generate only consumes the dataset seed; everything else runs on the
    // training seed.
    if (generating) cfg.data_seed = a.seed;
    else cfg.seed = a.seed;
  }
  if (a.no_agc) cfg.agc = false;
  if (a.no_gaa) cfg.gaa = false;
  if (a.no_sfc) cfg.sfc = false;
  if (a.states > 0) cfg.schedule = even_schedule(cfg.classes, a.states);
  if (a.exemplars >= 0) cfg.exemplars = static_cast<std::size_t>(a.exemplars);
  return cfg;
}

void prepare_dir(const std::string& dir) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("'" + dir + "' exists and is not a directory");
    if (!fs::is_empty(dir)) throw ConfigError("'" + dir + "' already exists and is not empty");
  } else {
    fs::create_directories(dir);
  }
}

void write_config(const CliConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  cfg.echo(out);
}

DatasetSplit load_or_fail(const CliConfig& cfg) {
  const std::string manifest = cfg.dataset + "/manifest.txt";
  if (!fs::exists(manifest)) {
    throw IoError("no dataset at '" + cfg.dataset + "' (run `pcil generate` first)");
  }
  return load_dataset(manifest);
}

void print_state(const StateLog& log) {
  std::printf("state %d: classes %zu  acc %.4f  raw %.4f  loss %.4f  (%.1fs)\n", log.state,
              log.classes_seen, log.acc_with_comp, log.acc_without_comp, log.loss_final,
              log.seconds);
  std::fflush(stdout);
}

int cmd_generate(const CommonArgs& args) {
  CliConfig cfg = resolve_config(args, true);
  const std::string dir = args.out.empty() ? cfg.dataset : args.out;
  DatasetSplit split = generate(cfg.classes, cfg.train_per_class, cfg.test_per_class, cfg.points,
                                cfg.data_seed, cfg.clutter);
  prepare_dir(dir);
  save_dataset(dir, split);
  std::printf("wrote %zu classes x (%zu train + %zu test) clouds of %zu points to %s\n",
              split.num_classes(), cfg.train_per_class, cfg.test_per_class, cfg.points,
              dir.c_str());
  return 0;
}

void export_attention(const Model& model, const RunArtifacts& art, const ForwardOptions& fwd,
                      const DatasetSplit& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  bool header = false;
  for (int cls : art.cmap.classes) {
    const auto& clouds = data.test.at(static_cast<std::size_t>(cls));
    ForwardResult r = model.forward(clouds.front(), fwd);
    if (!r.gate) throw ConfigError("attention is disabled, nothing to export");
    const std::size_t L = r.gate->data.shape[0], d = r.gate->data.shape[1];
    if (!header) {
      out << "class,structure";
      for (std::size_t j = 0; j < d; ++j) out << ",g" << j;
      out << '\n';
      header = true;
    }
    for (std::size_t l = 0; l < L; ++l) {
      out << shape_class_name(cls) << ',' << l;
      for (std::size_t j = 0; j < d; ++j) {
        out << ',' << detail::fmt_double(r.gate->data.values[l * d + j]);
      }
      out << '\n';
    }
  }
}

int cmd_train(const CommonArgs& args, const std::string& attention_csv) {
  CliConfig cfg = resolve_config(args, false);
  DatasetSplit data = load_or_fail(cfg);
  const std::string dir = args.out.empty() ? "run" : args.out;
  prepare_dir(dir);
  write_config(cfg, dir + "/config.txt");

  RunConfig rc = cfg.run_config();
  RunArtifacts art = Runner::run(data, rc, [&](const StateLog& log, const RunArtifacts& a) {
    print_state(log);
    save_checkpoint(dir + "/state_" + std::to_string(log.state) + ".ckpt", a.params, a.stats,
                    log.state);
  });

  std::ofstream csv(dir + "/runlog.csv");
  if (!csv) throw IoError("cannot write " + dir + "/runlog.csv");
  art.log.write_csv(csv);

  if (!attention_csv.empty()) {
    Model probe = probe_model(rc, art);
    export_attention(probe, art, rc.forward_options(), data, dir + "/" + attention_csv);
  }
  std::printf("average incremental accuracy %.4f (raw %.4f); artifacts in %s\n",
              art.log.average_accuracy(true), art.log.average_accuracy(false), dir.c_str());
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& key, std::vector<std::size_t> values) {
  if (key != "exemplars" && key != "states") {
    throw ConfigError("sweep key must be 'exemplars' or 'states', got '" + key + "'");
  }
  if (values.empty()) {
    values = key == "exemplars" ? std::vector<std::size_t>{0, 30, 60, 120}
                                : std::vector<std::size_t>{2, 5};
  }
  CliConfig cfg = resolve_config(args, false);
  DatasetSplit data = load_or_fail(cfg);
  const std::string dir = args.out.empty() ? "sweep" : args.out;
  prepare_dir(dir);
  write_config(cfg, dir + "/config.txt");

  std::ofstream csv(dir + "/sweep.csv");
  if (!csv) throw IoError("cannot write " + dir + "/sweep.csv");
  csv << "key,value,state,classes_seen,acc_with_comp,acc_without_comp,loss_final\n";
  for (std::size_t v : values) {
    CliConfig point = cfg;
    if (key == "exemplars") point.exemplars = v;
    else point.schedule = even_schedule(point.classes, v);
    std::printf("-- %s=%zu\n", key.c_str(), v);
    RunArtifacts art = Runner::run(data, point.run_config(),
                                   [](const StateLog& log, const RunArtifacts&) { print_state(log); });
    for (const auto& st : art.log.states) {
      csv << key << ',' << v << ',' << st.state << ',' << st.classes_seen << ','
          << detail::fmt_double(st.acc_with_comp) << ',' << detail::fmt_double(st.acc_without_comp)
          << ',' << detail::fmt_double(st.loss_final) << '\n';
    }
    std::printf("   average %.4f\n", art.log.average_accuracy(true));
  }
  std::printf("sweep written to %s/sweep.csv\n", dir.c_str());
  return 0;
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  long column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<long>(i);
    }
    return -1;
  }
};

Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  Csv csv;
  std::string line;
  std::size_t line_no = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.push_back("");
    return out;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (csv.header.empty()) {
      csv.header = std::move(cells);
    } else {
      if (cells.size() != csv.header.size()) {
        throw ParseError(path + " line " + std::to_string(line_no) + ": expected " +
                         std::to_string(csv.header.size()) + " fields, got " +
                         std::to_string(cells.size()));
      }
      csv.rows.push_back(std::move(cells));
    }
  }
  if (csv.header.empty()) throw ParseError(path + ": empty CSV");
  if (csv.rows.empty()) throw ParseError(path + ": no data rows");
  return csv;
}

int cmd_plot(const std::string& input, std::string out_path, std::string y_column,
             std::string title) {
  const Csv csv = read_csv(input);
  const long x_col = csv.column("state");
  if (x_col < 0) throw ParseError(input + ": no 'state' column");
  const bool default_y = y_column.empty();
  if (default_y) y_column = "acc_with_comp";
  const long y_col = csv.column(y_column);
  if (y_col < 0) throw ParseError(input + ": no '" + y_column + "' column");

  // one series per variant/value group when present, otherwise the plain run
  // log, which gets both score columns for comparison
  const long variant_col = csv.column("variant");
  const long value_col = csv.column("value");
  const long key_col = csv.column("key");

  if (out_path.empty()) {
    out_path = input;
    const auto dot = out_path.find_last_of('.');
    if (dot != std::string::npos) out_path.resize(dot);
    out_path += ".svg";
  }
  if (title.empty()) title = y_column + " by state";

  LineChart chart(title, "state", y_column);
  auto numeric = [&](const std::vector<std::string>& row, long col) {
    return detail::parse_double(row[static_cast<std::size_t>(col)], 0);
  };
  if (variant_col >= 0 || value_col >= 0) {
    const long group_col = variant_col >= 0 ? variant_col : value_col;
    std::vector<std::string> order;  // first-appearance order
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& row : csv.rows) {
      std::string label = row[static_cast<std::size_t>(group_col)];
      if (variant_col < 0 && key_col >= 0) {
        label = row[static_cast<std::size_t>(key_col)] + "=" + label;
      }
      if (!groups.count(label)) order.push_back(label);
      auto& [xs, ys] = groups[label];
      xs.push_back(numeric(row, x_col));
      ys.push_back(numeric(row, y_col));
    }
    for (const auto& label : order) {
      chart.add_series(label, groups[label].first, groups[label].second);
    }
  } else {
    std::vector<double> xs, ys;
    for (const auto& row : csv.rows) {
      xs.push_back(numeric(row, x_col));
      ys.push_back(numeric(row, y_col));
    }
    chart.add_series(default_y ? "with compensation" : y_column, xs, ys);
    const long raw_col = csv.column("acc_without_comp");
    if (default_y && raw_col >= 0) {
      std::vector<double> raw;
      for (const auto& row : csv.rows) raw.push_back(numeric(row, raw_col));
      chart.add_series("raw scores", xs, raw);
    }
  }

  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);
  chart.render(out);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

bool user_error(const Error& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
         dynamic_cast<const IoError*>(&e) || dynamic_cast<const GenerationError*>(&e) ||
         dynamic_cast<const ScheduleError*>(&e) || dynamic_cast<const MemoryError*>(&e);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incremental point-cloud classification workbench"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, sweep_args;
  std::string attention_csv, sweep_key = "exemplars";
  std::vector<std::size_t> sweep_values;
  std::string plot_in, plot_out, plot_y, plot_title;

  CLI::App* gen = app.add_subcommand("generate", "sample the synthetic benchmark to a directory");
  add_common(gen, gen_args, false);

  CLI::App* train = app.add_subcommand("train", "run the incremental schedule on a dataset");
  add_common(train, train_args, true);
  train->add_option("--attention-csv", attention_csv,
                    "also export per-structure attention gates to this file");

  CLI::App* sweep = app.add_subcommand("sweep", "repeat the run across a parameter range");
  add_common(sweep, sweep_args, true);
  sweep->add_option("--key", sweep_key, "what to sweep: exemplars or states");
  sweep->add_option("--values", sweep_values, "list of sweep values")->expected(-1);

  CLI::App* plot = app.add_subcommand("plot", "render a run or sweep CSV as an SVG chart");
  plot->add_option("csv", plot_in, "input CSV file")->required();
  plot->add_option("--out", plot_out, "output SVG path (default: input with .svg)");
  plot->add_option("--y", plot_y, "numeric column to plot (default acc_with_comp)");
  plot->add_option("--title", plot_title, "chart title");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_generate(gen_args);
    if (train->parsed()) return cmd_train(train_args, attention_csv);
    if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_key, sweep_values);
    if (plot->parsed()) return cmd_plot(plot_in, plot_out, plot_y, plot_title);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return user_error(e) ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
}
