#include "clld_cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "clld/augment.hpp"
#include "clld/config_io.hpp"
#include "clld/errors.hpp"

namespace clld::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<AblationCell> default_ablation_grid() {
  std::vector<AblationCell> cells;
  for (bool masking : {true, false}) {
    const std::string suffix = masking ? "+mask" : "+nomask";
    cells.push_back({"sim" + suffix, LossSwitches{false, true, true}, masking, true});
    cells.push_back({"cons" + suffix, LossSwitches{true, false, true}, masking, true});
    cells.push_back({"both" + suffix, LossSwitches{true, true, true}, masking, true});
  }
  return cells;
}

namespace {

// Dataset tags for seeds derived from the global seed.
constexpr std::uint64_t kCorpusTag = 1;
constexpr std::uint64_t kFinetuneDataTag = 2;
constexpr std::uint64_t kEvalDataTag = 3;
constexpr std::uint64_t kGenDataTag = 4;

json without(json j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) j.erase(k);
  return j;
}

// Programmatic json stores small literals as signed; files parse them unsigned.
bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
}

// Dataset section with defaults and a seed derived from the run seed when absent.
DatasetSpec dataset_from(const json* section, std::size_t default_count, std::uint64_t seed, std::uint64_t tag) {
  DatasetSpec spec;
  spec.count = default_count;
  spec.seed = derive_seed(seed, tag);
  if (section != nullptr) {
    spec = dataset_spec_from_json(*section, spec);
    if (!section->contains("seed")) spec.seed = derive_seed(seed, tag);
  }
  return spec;
}

AblateConfig ablate_from(const json& j) {
  require_object(j, "ablate");
  AblateConfig c;
  for (const auto& item : j.items()) {
    if (item.key() == "seeds") {
      if (!item.value().is_array()) throw ConfigError("ablate.seeds: expected an array of integers");
      c.seeds.clear();
      for (const auto& s : item.value()) {
        if (!is_count(s)) throw ConfigError("ablate.seeds: expected non-negative integers");
        c.seeds.push_back(s.get<std::uint64_t>());
      }
    } else if (item.key() == "focus_subset") {
      if (!item.value().is_string()) throw ConfigError("ablate.focus_subset: expected a string");
      c.focus_subset = item.value().get<std::string>();
    } else if (item.key() == "cells") {
      if (!item.value().is_array()) throw ConfigError("ablate.cells: expected an array");
      for (const auto& cj : item.value()) {
        require_object(cj, "ablate.cells[]");
        AblationCell cell;
        for (const auto& f : cj.items()) {
          const std::string& k = f.key();
          const json& v = f.value();
          auto flag = [&](bool& out) {
            if (!v.is_boolean()) throw ConfigError("ablate.cells[]." + k + ": expected true or false");
            out = v.get<bool>();
          };
          if (k == "name") {
            if (!v.is_string()) throw ConfigError("ablate.cells[].name: expected a string");
            cell.name = v.get<std::string>();
          } else if (k == "use_sim") {
            flag(cell.loss.use_sim);
          } else if (k == "use_cons") {
            flag(cell.loss.use_cons);
          } else if (k == "use_inst") {
            flag(cell.loss.use_inst);
          } else if (k == "masking") {
            flag(cell.masking);
          } else if (k == "pretrained") {
            flag(cell.pretrained);
          } else {
            throw ConfigError("ablate.cells[]: unknown key '" + k + "'");
          }
        }
        if (cell.name.empty()) throw ConfigError("ablate.cells[]: every cell needs a name");
        c.cells.push_back(cell);
      }
    } else {
      throw ConfigError("ablate: unknown key '" + item.key() + "'");
    }
  }
  return c;
}

json ablate_to_json(const AblateConfig& c) {
  json cells = json::array();
  for (const auto& cell : c.cells) {
    cells.push_back({{"name", cell.name},
                     {"use_sim", cell.loss.use_sim},
                     {"use_cons", cell.loss.use_cons},
                     {"use_inst", cell.loss.use_inst},
                     {"masking", cell.masking},
                     {"pretrained", cell.pretrained}});
  }
  return {{"seeds", c.seeds}, {"cells", cells}, {"focus_subset", c.focus_subset}};
}

void set_image_size(DatasetSpec& spec, std::size_t h, std::size_t w) {
  spec.generator.image_h = h;
  spec.generator.image_w = w;
}

void check_image_size(const DatasetSpec& spec, const EncoderConfig& enc, const std::string& what) {
  if (spec.generator.image_h != enc.input_h || spec.generator.image_w != enc.input_w) {
    throw ConfigError(what + " images are " + std::to_string(spec.generator.image_h) + "x" +
                      std::to_string(spec.generator.image_w) + " but the encoder expects " +
                      std::to_string(enc.input_h) + "x" + std::to_string(enc.input_w));
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LoadError("cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw LoadError("cannot write " + p.string());
  out << text;
}

std::string resolved_text(const RunConfig& c) { return c.to_json().dump(2) + "\n"; }

// Creates `dir`; refuses a non-empty one unless `force` (which clears it).
void prepare_out_dir(const fs::path& dir, bool force, bool allow_existing = false) {
  if (dir.empty()) throw ConfigError("an output directory is required (--out)");
  if (fs::exists(dir) && !fs::is_directory(dir)) throw LoadError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !allow_existing) {
    if (!force) throw LoadError("output directory " + dir.string() + " is not empty (pass --force to overwrite)");
    for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
  }
  fs::create_directories(dir);
}

template <typename T>
ParamSet<float> to_float(const ParamSet<T>& p) {
  ParamSet<float> out;
  for (const auto& np : p) {
    const auto src = np.value.data();
    out.add(np.name, np.kind, Tensor<float>(np.value.shape(), std::vector<float>(src.begin(), src.end())));
  }
  return out;
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

json RunConfig::to_json() const {
  json pre = to_json_value(pretrain);
  pre["corpus"] = to_json_value(pretrain_corpus);
  pre["checkpoint_every"] = checkpoint_every;
  json ft = to_json_value(finetune);
  ft["data"] = to_json_value(finetune_data);
  json ev = to_json_value(eval);
  ev["data"] = to_json_value(eval_data);
  return {{"seed", seed},   {"gen-data", to_json_value(gen_data)}, {"pretrain", pre},
          {"finetune", ft}, {"eval", ev},                          {"ablate", ablate_to_json(ablate)}};
}

RunConfig resolve_run_config(const json& file, const Overrides& ov) {
  const json root = file.is_null() ? json::object() : file;
  require_object(root, "config");
  for (const auto& item : root.items()) {
    static const char* known[] = {"seed", "gen-data", "pretrain", "finetune", "eval", "ablate"};
    if (std::find(std::begin(known), std::end(known), item.key()) == std::end(known)) {
      throw ConfigError("config: unknown key '" + item.key() + "'");
    }
  }
  RunConfig c;
  if (root.contains("seed")) {
    if (!is_count(root["seed"])) throw ConfigError("config.seed: expected a non-negative integer");
    c.seed = root["seed"].get<std::uint64_t>();
  }
  if (ov.seed) c.seed = *ov.seed;

  auto section = [&](const char* name) -> const json* {
    auto it = root.find(name);
    if (it == root.end()) return nullptr;
    require_object(*it, name);
    return &*it;
  };

  c.gen_data = dataset_from(section("gen-data"), 0, c.seed, kGenDataTag);
  if (ov.count) c.gen_data.count = *ov.count;

  c.pretrain.seed = c.seed;
  if (const json* p = section("pretrain")) {
    c.pretrain = train_config_from_json(without(*p, {"corpus", "checkpoint_every"}), c.pretrain);
    if (!p->contains("seed")) c.pretrain.seed = c.seed;
    if (p->contains("checkpoint_every")) {
      if (!is_count((*p)["checkpoint_every"])) {
        throw ConfigError("pretrain.checkpoint_every: expected a non-negative integer");
      }
      c.checkpoint_every = (*p)["checkpoint_every"].get<std::size_t>();
    }
    c.pretrain_corpus = dataset_from(p->contains("corpus") ? &(*p)["corpus"] : nullptr, 2000, c.seed, kCorpusTag);
  } else {
    c.pretrain_corpus = dataset_from(nullptr, 2000, c.seed, kCorpusTag);
  }
  if (ov.steps) c.pretrain.total_steps = *ov.steps;
  if (ov.precision) c.pretrain.encoder.precision = *ov.precision;

  c.finetune.seed = c.seed;
  if (const json* f = section("finetune")) {
    c.finetune = finetune_config_from_json(without(*f, {"data"}), c.finetune);
    if (!f->contains("seed")) c.finetune.seed = c.seed;
    c.finetune_data = dataset_from(f->contains("data") ? &(*f)["data"] : nullptr, 1000, c.seed, kFinetuneDataTag);
  } else {
    c.finetune_data = dataset_from(nullptr, 1000, c.seed, kFinetuneDataTag);
  }

  if (const json* e = section("eval")) {
    c.eval = eval_config_from_json(without(*e, {"data"}), c.eval);
    c.eval_data = dataset_from(e->contains("data") ? &(*e)["data"] : nullptr, 500, c.seed, kEvalDataTag);
  } else {
    c.eval_data = dataset_from(nullptr, 500, c.seed, kEvalDataTag);
  }

  if (const json* a = section("ablate")) c.ablate = ablate_from(*a);
  if (c.ablate.cells.empty()) c.ablate.cells = default_ablation_grid();

  if (ov.alpha) {
    c.pretrain.alpha = *ov.alpha;
    EncoderConfig& enc = c.pretrain.encoder;
    const std::size_t side = input_side_for_alpha(*ov.alpha, enc.total_stride(), enc.input_h);
    enc.input_h = enc.input_w = side;
    for (DatasetSpec* d : {&c.gen_data, &c.pretrain_corpus, &c.finetune_data, &c.eval_data}) set_image_size(*d, side, side);
  }

  if (c.pretrain.encoder.precision != 32 && c.pretrain.encoder.precision != 64) {
    throw ConfigError("precision must be 32 or 64");
  }
  c.pretrain.validate();
  c.finetune.validate();
  c.eval.validate();
  for (const DatasetSpec* d : {&c.gen_data, &c.pretrain_corpus, &c.finetune_data, &c.eval_data}) d->generator.validate();
  check_image_size(c.pretrain_corpus, c.pretrain.encoder, "pretrain.corpus");
  check_image_size(c.finetune_data, c.pretrain.encoder, "finetune.data");
  check_image_size(c.eval_data, c.pretrain.encoder, "eval.data");
  return c;
}

RunConfig load_run_config(const std::optional<fs::path>& path, const Overrides& overrides) {
  return resolve_run_config(path ? read_json_file(*path) : json::object(), overrides);
}

std::uint64_t run_digest(const RunConfig& config) { return config_digest(resolved_text(config)); }

// --- pipeline ---------------------------------------------------------------

ImageCorpus pretrain_corpus(const RunConfig& config, const std::optional<fs::path>& data) {
  const std::vector<LaneScene> scenes = data ? load_dataset(*data) : generate_dataset(config.pretrain_corpus);
  if (scenes.empty()) throw LoadError("pretraining corpus is empty");
  ImageCorpus corpus;
  corpus.reserve(scenes.size());
  for (const auto& s : scenes) corpus.push_back(normalize_per_channel(s.image));
  return corpus;
}

namespace {

template <typename T>
PretrainOutcome pretrain_impl(const RunConfig& config, const ImageCorpus& corpus, std::ostream* log,
                              const std::optional<fs::path>& checkpoint_dir, const std::optional<fs::path>& resume) {
  TrainerState<T> state;
  if (resume) {
    if (!fs::exists(*resume)) throw LoadError("checkpoint not found: " + resume->string());
    state = load_checkpoint<T>(*resume);
    const json saved = without(to_json_value(state.config), {"total_steps"});
    const json wanted = without(to_json_value(config.pretrain), {"total_steps"});
    if (saved != wanted) {
      throw LoadError("checkpoint " + resume->string() + " was written with a different pretraining config");
    }
    state.config.total_steps = config.pretrain.total_steps;
  } else {
    state = init_trainer<T>(config.pretrain);
  }
  if (checkpoint_dir) fs::create_directories(*checkpoint_dir);
  PretrainOutcome out;
  while (state.step < state.config.total_steps) {
    const StepMetrics m = pretrain_step(state, corpus);
    if (log != nullptr) *log << m.csv_line() << '\n';
    out.metrics.push_back(m);
    if (checkpoint_dir && config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 &&
        state.step < state.config.total_steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "step_%06zu.ckpt", state.step);
      save_checkpoint(state, *checkpoint_dir / name);
    }
  }
  if (log != nullptr) log->flush();
  if (checkpoint_dir) save_checkpoint(state, *checkpoint_dir / "final.ckpt");
  out.online = to_float(state.pair.online);
  out.final_step = state.step;
  return out;
}

}  // namespace

PretrainOutcome run_pretrain(const RunConfig& config, const ImageCorpus& corpus, std::ostream* log,
                             const std::optional<fs::path>& checkpoint_dir, const std::optional<fs::path>& resume) {
  if (config.pretrain.encoder.precision == 64) {
    return pretrain_impl<double>(config, corpus, log, checkpoint_dir, resume);
  }
  return pretrain_impl<float>(config, corpus, log, checkpoint_dir, resume);
}

FinetuneOutcome run_finetune_eval(const RunConfig& config, const ParamSet<float>* pretrained,
                                  const std::vector<LaneScene>& train, const std::vector<LaneScene>& test) {
  EncoderConfig enc = config.pretrain.encoder;
  enc.precision = 32;
  LaneModel model = init_lane_model(enc, config.finetune.head, pretrained, config.finetune.seed);
  FinetuneResult r = finetune(std::move(model), train, config.finetune, config.finetune_data.generator.mark_width_px);
  FinetuneOutcome out;
  out.report = evaluate(r.model, test, config.eval);
  out.model = std::move(r.model);
  out.losses = std::move(r.losses);
  return out;
}

// --- ablation ---------------------------------------------------------------

std::optional<double> AblationTable::median(const std::string& cell, const std::string& subset,
                                            const std::string& metric) const {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (r.cell != cell || !r.ok) continue;
    const SubsetRow* row = r.report.find(subset);
    if (row == nullptr) continue;
    if (metric == "f1") v.push_back(row->culane.f1);
    else if (metric == "recall") v.push_back(row->culane.recall);
    else if (metric == "precision") v.push_back(row->culane.precision);
    else if (metric == "tusimple_accuracy") v.push_back(row->tusimple.accuracy);
    else throw ConfigError("unknown metric '" + metric + "'");
  }
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string AblationTable::to_csv() const {
  std::string out = "cell,use_sim,use_cons,use_inst,masking,pretrained,seeds_ok," + focus_subset + "_f1,overall_f1," +
                    "overall_precision,overall_recall,overall_tusimple_accuracy,status\n";
  auto cellv = [](const std::optional<double>& v) { return v ? fixed(*v) : std::string("nan"); };
  for (const auto& c : cells) {
    std::size_t ok = 0;
    std::string errors;
    for (const auto& r : runs) {
      if (r.cell != c.name) continue;
      if (r.ok) ++ok;
      else errors += (errors.empty() ? "" : "; ") + ("seed " + std::to_string(r.seed) + ": " + r.error);
    }
    std::replace(errors.begin(), errors.end(), ',', ' ');
    out += c.name + "," + (c.loss.use_sim ? "1" : "0") + "," + (c.loss.use_cons ? "1" : "0") + "," +
           (c.loss.use_inst ? "1" : "0") + "," + (c.masking ? "1" : "0") + "," + (c.pretrained ? "1" : "0") + "," +
           std::to_string(ok) + "," + cellv(median(c.name, focus_subset, "f1")) + "," +
           cellv(median(c.name, "overall", "f1")) + "," + cellv(median(c.name, "overall", "precision")) + "," +
           cellv(median(c.name, "overall", "recall")) + "," + cellv(median(c.name, "overall", "tusimple_accuracy")) +
           "," + (errors.empty() ? "ok" : errors) + "\n";
  }
  return out;
}

std::string AblationTable::runs_csv() const {
  std::string out = "cell,seed,status,subset,images,tp,fp,fn,precision,recall,f1,tusimple_accuracy,fp_rate,fn_rate\n";
  for (const auto& r : runs) {
    if (!r.ok) {
      std::string e = r.error;
      std::replace(e.begin(), e.end(), ',', ' ');
      out += r.cell + "," + std::to_string(r.seed) + ",failed: " + e + ",,,,,,,,,,,\n";
      continue;
    }
    for (const auto& row : r.report.rows) {
      out += r.cell + "," + std::to_string(r.seed) + ",ok," + row.subset + "," + std::to_string(row.images) + "," +
             std::to_string(row.culane.tp) + "," + std::to_string(row.culane.fp) + "," +
             std::to_string(row.culane.fn) + "," + fixed(row.culane.precision) + "," + fixed(row.culane.recall) + "," +
             fixed(row.culane.f1) + "," + fixed(row.tusimple.accuracy) + "," + fixed(row.tusimple.fp_rate) + "," +
             fixed(row.tusimple.fn_rate) + "\n";
    }
  }
  return out;
}

AblationTable run_ablation(const json& file, const Overrides& overrides, std::ostream* progress) {
  const RunConfig base = resolve_run_config(file, overrides);
  AblationTable table;
  table.cells = base.ablate.cells;
  table.seeds = base.ablate.seeds;
  table.focus_subset = base.ablate.focus_subset;
  for (std::uint64_t seed : table.seeds) {
    Overrides ov = overrides;
    ov.seed = seed;
    RunConfig cfg;
    ImageCorpus corpus;
    std::vector<LaneScene> train, test;
    std::string setup_error;
    try {
      cfg = resolve_run_config(file, ov);
      train = generate_dataset(cfg.finetune_data);
      test = generate_dataset(cfg.eval_data);
      corpus = pretrain_corpus(cfg, std::nullopt);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (const auto& cell : table.cells) {
      AblationRun run;
      run.cell = cell.name;
      run.seed = seed;
      if (!setup_error.empty()) {
        run.error = setup_error;
        table.runs.push_back(std::move(run));
        continue;
      }
      try {
        RunConfig c = cfg;
        c.pretrain.loss = cell.loss;
        c.pretrain.masking_enabled = cell.masking;
        std::optional<PretrainOutcome> pre;
        if (cell.pretrained) {
          c.pretrain.validate();
          pre = run_pretrain(c, corpus, nullptr, std::nullopt, std::nullopt);
          run.pretrain_metrics = pre->metrics;
          const std::size_t probe = std::min<std::size_t>(64, corpus.size());
          const ImageCorpus probe_set(corpus.begin(), corpus.begin() + static_cast<long>(probe));
          EncoderConfig enc = c.pretrain.encoder;
          run.feature_std = pooled_feature_std(pre->online, enc, probe_set);
        }
        FinetuneOutcome ft = run_finetune_eval(c, pre ? &pre->online : nullptr, train, test);
        run.report = std::move(ft.report);
        run.report.config_digest = digest_hex(run_digest(c));
        run.report.checkpoint_id = cell.pretrained ? cell.name : "random-init";
        run.finetune_losses = std::move(ft.losses);
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      if (progress != nullptr) {
        *progress << "cell " << run.cell << " seed " << seed << ": ";
        if (run.ok) *progress << table.focus_subset << "_f1=" << fixed(run.report.find(table.focus_subset)
                                                                           ? run.report.row(table.focus_subset).culane.f1
                                                                           : 0.0)
                              << " overall_f1=" << fixed(run.report.row("overall").culane.f1) << '\n';
        else *progress << "failed: " << run.error << '\n';
        progress->flush();
      }
      table.runs.push_back(std::move(run));
    }
  }
  return table;
}

// --- commands ---------------------------------------------------------------

void cmd_gen_data(const CommandOptions& o, std::ostream& out) {
  const RunConfig cfg = load_run_config(o.config, o.overrides);
  prepare_out_dir(o.out, o.force);
  const auto scenes = generate_dataset(cfg.gen_data);
  write_dataset(cfg.gen_data, scenes, o.out);
  const auto counts = scenario_counts(cfg.gen_data);
  out << "wrote " << scenes.size() << " scenes to " << o.out.string() << " (";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out << (i ? ", " : "") << scenario_name(kAllScenarios[i]) << " " << counts[i];
  }
  out << ")\n";
}

void cmd_pretrain(const CommandOptions& o, std::ostream& out) {
  const RunConfig cfg = load_run_config(o.config, o.overrides);
  const fs::path log_path = o.out / "metrics.log";
  const bool appending = o.resume && fs::exists(log_path);
  prepare_out_dir(o.out, o.force, appending);
  const std::string text = resolved_text(cfg);
  write_file(o.out / "config.json", text);
  const ImageCorpus corpus = pretrain_corpus(cfg, o.data);

  std::ofstream log(log_path, appending ? std::ios::app : std::ios::trunc);
  if (!log) throw LoadError("cannot write " + log_path.string());
  const EncoderConfig& enc = cfg.pretrain.encoder;
  if (!appending) {
    log << "# clld pretrain\n";
    log << "# config_digest=" << digest_hex(config_digest(text)) << '\n';
    log << "# checkpoint_config_digest=" << digest_hex(config_digest(to_json_value(cfg.pretrain).dump())) << '\n';
    log << "# input=" << enc.input_h << "x" << enc.input_w << " alpha=" << cfg.pretrain.alpha
        << " feature_map=" << enc.output_h() << "x" << enc.output_w() << " precision=" << enc.precision << '\n';
    log << "# corpus=" << corpus.size() << (o.data ? " images from " + o.data->string() : std::string(" generated"))
        << '\n';
    log << "# step,l_cons,l_sim,l_inst,l_clld,lr,m,grad_norm\n";
  } else {
    log << "# resumed from " << o.resume->filename().string() << '\n';
  }
  const PretrainOutcome r = run_pretrain(cfg, corpus, &log, o.out / "checkpoints", o.resume);
  out << "pretrained to step " << r.final_step << "; checkpoint " << (o.out / "checkpoints" / "final.ckpt").string()
      << '\n';
}

namespace {

std::vector<LaneScene> scenes_from(const std::optional<fs::path>& dir, const DatasetSpec& spec) {
  if (!dir) return generate_dataset(spec);
  if (!fs::exists(*dir)) throw LoadError("dataset directory not found: " + dir->string());
  return load_dataset(*dir);
}

void write_report(const EvalReport& report, const fs::path& dir) {
  write_file(dir / "report.txt", report.to_key_value());
  write_file(dir / "report.csv", report.to_csv());
}

}  // namespace

void cmd_finetune_eval(const CommandOptions& o, std::ostream& out) {
  if (!o.checkpoint && !o.random_init) {
    throw ConfigError("finetune needs --checkpoint <ckpt> or --random-init");
  }
  if (o.checkpoint && o.random_init) throw ConfigError("--checkpoint and --random-init are exclusive");
  const RunConfig cfg = load_run_config(o.config, o.overrides);
  std::optional<ParamSet<float>> pretrained;
  std::string checkpoint_id = "random-init";
  if (o.checkpoint) {
    if (!fs::exists(*o.checkpoint)) throw LoadError("checkpoint not found: " + o.checkpoint->string());
    pretrained = load_pretrained_encoder(*o.checkpoint, cfg.pretrain.encoder);
    checkpoint_id = digest_hex(config_digest(read_file(*o.checkpoint)));
  }
  const auto train = scenes_from(o.data, cfg.finetune_data);
  const auto test = scenes_from(o.eval_data, cfg.eval_data);
  prepare_out_dir(o.out, o.force);
  const std::string text = resolved_text(cfg);
  write_file(o.out / "config.json", text);

  FinetuneOutcome r = run_finetune_eval(cfg, pretrained ? &*pretrained : nullptr, train, test);
  r.report.config_digest = digest_hex(config_digest(text));
  r.report.checkpoint_id = checkpoint_id;
  std::ostringstream losses;
  losses << "# step,loss\n";
  for (std::size_t i = 0; i < r.losses.size(); ++i) losses << i << ',' << fixed(r.losses[i]) << '\n';
  write_file(o.out / "finetune.log", losses.str());
  const json run_meta = {{"config_digest", r.report.config_digest}, {"checkpoint_id", checkpoint_id}};
  save_lane_model(r.model, run_meta.dump(), config_digest(text), o.out / "model.bin");
  write_report(r.report, o.out);
  out << r.report.to_csv();
}

void cmd_eval(const CommandOptions& o, std::ostream& out) {
  if (!o.model) throw ConfigError("eval needs --model <model.bin>");
  if (!fs::exists(*o.model)) throw LoadError("model not found: " + o.model->string());
  const RunConfig cfg = load_run_config(o.config, o.overrides);
  const LaneModel model = load_lane_model(*o.model);
  const auto test = scenes_from(o.data, cfg.eval_data);
  prepare_out_dir(o.out, o.force);
  const std::string text = resolved_text(cfg);
  write_file(o.out / "config.json", text);
  EvalReport report = evaluate(model, test, cfg.eval);
  report.config_digest = digest_hex(config_digest(text));
  report.checkpoint_id = digest_hex(config_digest(read_file(*o.model)));
  write_report(report, o.out);
  out << report.to_csv();
}

void cmd_ablate(const CommandOptions& o, std::ostream& out) {
  const json file = o.config ? read_json_file(*o.config) : json::object();
  const RunConfig cfg = resolve_run_config(file, o.overrides);
  prepare_out_dir(o.out, o.force);
  const std::string text = resolved_text(cfg);
  write_file(o.out / "config.json", text);
  const AblationTable table = run_ablation(file, o.overrides, &out);
  write_file(o.out / "ablation.csv", "# config_digest=" + digest_hex(config_digest(text)) + "\n" + table.to_csv());
  write_file(o.out / "ablation_runs.csv", table.runs_csv());
  out << table.to_csv();
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const LoadError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const EvaluationError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const NumericError*>(&e) != nullptr) return 4;
  return 1;
}

}  // namespace clld::cli
