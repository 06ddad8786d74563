#include "tlr/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "tlr/corpus.hpp"
#include "tlr/error.hpp"
#include "tlr/eval.hpp"
#include "tlr/hgt.hpp"
#include "tlr/javastruct.hpp"
#include "tlr/manifest.hpp"
#include "tlr/promptgen.hpp"
#include "tlr/rng.hpp"
#include "tlr/stats.hpp"
#include "tlr/strategies.hpp"

namespace tlr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 42;
  std::string out_dir = ".";
};

void write_json(const fs::path& file, const json& j) { write_file(file, j.dump(2) + "\n"); }

json read_json(const fs::path& file) {
  try {
    return json::parse(read_file(file));
  } catch (const json::parse_error& ex) {
    throw ValidationError("cannot parse " + file.string() + ": " + ex.what());
  }
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ValidationError("missing required input: " + what);
  if (!fs::exists(path)) throw ValidationError(what + " not found: " + path);
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void finish(RunManifest& m, const fs::path& out_dir, const std::vector<fs::path>& outputs) {
  for (const auto& o : outputs) m.hash_output(o);
  json j = to_json(m);
  // Output paths are recorded relative to the output directory.
  json rel = json::object();
  for (const auto& [path, hash] : m.output_hashes) rel[fs::path(path).filename().string()] = hash;
  j["output_hashes"] = rel;
  write_json(out_dir / "manifest.json", j);
}

struct GraphFile {
  strategies::StrategyGraph graph;
  strategies::Split split;
};

GraphFile load_graph(const std::string& path) {
  require_file(path, "strategy graph");
  const json j = read_json(path);
  GraphFile g;
  g.graph = strategies::graph_from_json(j);
  if (!j.contains("split")) throw ValidationError("graph file " + path + " has no split; run `tlr extract`");
  g.split = strategies::split_from_json(j.at("split"));
  return g;
}

/// Negatives are partitioned with a seed derived from the link split so that
/// prediction, prompting and evaluation agree on the candidate pairs.
hgt::NegativeSplit negatives_for(const Project& project, const strategies::Split& split) {
  return hgt::split_negatives(project, derive_seed(split.seed, 7));
}

std::vector<Link> candidate_pairs(const std::string& which, const Project& project, const strategies::Split& split) {
  std::vector<Link> out;
  if (which == "all") {
    for (const auto& r : project.requirement_ids()) {
      for (const auto& c : project.code_ids()) out.push_back({r, c});
    }
    return out;
  }
  const auto neg = negatives_for(project, split);
  const LinkSet* pos = nullptr;
  const std::vector<Link>* negs = nullptr;
  if (which == "test") {
    pos = &split.test;
    negs = &neg.test;
  } else if (which == "validation") {
    pos = &split.validation;
    negs = &neg.validation;
  } else if (which == "train") {
    pos = &split.train;
    negs = &neg.train;
  } else {
    throw ValidationError("unknown pair set '" + which + "' (expected test, validation, train or all)");
  }
  LinkSet merged(pos->begin(), pos->end());
  merged.insert(negs->begin(), negs->end());
  return {merged.begin(), merged.end()};
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Candidate pairs with a predicted label.
struct PredictionFile {
  LinkSet candidates;
  LinkSet predicted;
};

std::string predictions_tsv(const std::vector<hgt::Prediction>& preds) {
  std::string out = "req_id\tcode_id\tscore\tlabel\n";
  for (const auto& p : preds) {
    out += p.req_id + "\t" + p.code_id + "\t" + format_double(p.score) + "\t" + (p.label ? "1" : "0") + "\n";
  }
  return out;
}

PredictionFile parse_predictions(const std::string& content, const Project& project) {
  PredictionFile f;
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("req_id\t", 0) == 0) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 4 || (cols[3] != "0" && cols[3] != "1")) {
      throw ValidationError("predictions line " + std::to_string(line_no) + ": expected req_id, code_id, score, label");
    }
    const Artifact* r = project.find(cols[0]);
    const Artifact* c = project.find(cols[1]);
    if (r == nullptr || r->kind != ArtifactKind::Requirement || c == nullptr || c->kind != ArtifactKind::Code) {
      throw ValidationError("predictions line " + std::to_string(line_no) + " names an unknown pair " + cols[0] +
                            " -> " + cols[1]);
    }
    Link l{cols[0], cols[1]};
    f.candidates.insert(l);
    if (cols[3] == "1") f.predicted.insert(l);
  }
  return f;
}

EmbeddingTable embeddings_for(const Project& project, const std::string& root, const std::string& file,
                              std::size_t dim, std::uint64_t seed, std::string& source, RunManifest& m) {
  std::string path = file;
  if (path.empty() && fs::exists(fs::path(root) / "embeddings.vec")) path = (fs::path(root) / "embeddings.vec").string();
  if (!path.empty()) {
    source = "file:" + path;
    m.hash_input(path);
    EmbeddingTable t = load_embeddings(path, project);
    for (const auto& a : project.artifacts()) {
      if (t.find(a.id) == nullptr) throw ValidationError("embedding file " + path + " has no vector for " + a.id);
    }
    return t;
  }
  source = "substitute";
  std::vector<std::vector<std::string>> docs;
  for (const auto& a : project.artifacts()) docs.push_back(a.tokens);
  auto sub = hgt::substitute_embeddings(project, build_vocabulary(docs), dim, seed);
  if (!sub.zero_vector_ids.empty()) m.config["zero_vector_ids"] = sub.zero_vector_ids;
  return std::move(sub.table);
}

// --- commands --------------------------------------------------------------

struct DiffRatioArgs {
  std::string root;
  std::size_t resamples = 100;
};

void cmd_diffratio(const DiffRatioArgs& a, const Common& c, RunManifest& m, std::ostream& out) {
  StageTimer timer(m);
  m.hash_input(a.root);
  const Project project = load_project(a.root, {});
  timer.lap("load");
  stats::DiffRatioOptions opt;
  opt.n_resamples = a.resamples;
  opt.seed = c.seed;
  const auto report = stats::difference_ratio(project, opt);
  timer.lap("difference_ratio");
  m.config = {{"root", a.root}, {"resamples", a.resamples}};
  m.seeds = {{"root", c.seed}, {"resamples", report.resample_seeds}};
  const fs::path dir = prepare_out(c.out_dir);
  write_json(dir / "diffratio.json", stats::to_json(report));
  write_file(dir / "diffratio.md", stats::to_markdown(report, project.name()));
  finish(m, dir, {dir / "diffratio.json", dir / "diffratio.md"});
  out << stats::to_markdown(report, project.name());
}

struct ExtractArgs {
  std::string root;
  double feedback_fraction = 0.1;
  double top_fraction = 0.2;
  bool dump_structure = false;
};

void cmd_extract(const ExtractArgs& a, const Common& c, RunManifest& m, std::ostream& out) {
  StageTimer timer(m);
  m.hash_input(a.root);
  const Project project = load_project(a.root, {});
  timer.lap("load");
  strategies::ExtractOptions opt;
  opt.feedback_fraction = a.feedback_fraction;
  opt.top_fraction = a.top_fraction;
  opt.seed = c.seed;
  const auto ex = strategies::extract(project, opt);
  timer.lap("extract");
  m.config = {{"root", a.root}, {"feedback_fraction", a.feedback_fraction}, {"top_fraction", a.top_fraction}};
  m.seeds = {{"root", c.seed}, {"split", derive_seed(c.seed, 0)}, {"feedback", derive_seed(c.seed, 1)}};
  const fs::path dir = prepare_out(c.out_dir);
  std::vector<fs::path> outputs{dir / "graph.json"};
  write_json(dir / "graph.json", strategies::to_json(ex, opt));
  if (a.dump_structure) {
    write_json(dir / "structures.json", java::to_json(ex.structures));
    outputs.push_back(dir / "structures.json");
  }
  finish(m, dir, outputs);
  out << "nodes: " << ex.graph.req_ids().size() << " requirements, " << ex.graph.code_ids().size() << " code\n";
  for (auto t : strategies::kAllEdgeTypes) out << strategies::to_string(t) << ": " << ex.graph.count(t) << "\n";
}

struct TrainArgs {
  std::string root;
  std::string graph;
  std::string embeddings;
  std::size_t dim = 64;
  std::string strategies = "all";
  hgt::ModelConfig model;
  hgt::TrainConfig train;
};

void cmd_train(TrainArgs a, const Common& c, RunManifest& m, std::ostream& out) {
  StageTimer timer(m);
  m.hash_input(a.root);
  m.hash_input(a.graph);
  const Project project = load_project(a.root, {});
  const GraphFile gf = load_graph(a.graph);
  const auto strategy = strategies::StrategySet::parse(a.strategies);
  std::string source;
  const EmbeddingTable emb = embeddings_for(project, a.root, a.embeddings, a.dim, derive_seed(c.seed, 4), source, m);
  timer.lap("load");
  a.model.input_dim = emb.dim;
  a.train.seed = c.seed;
  const auto g = hgt::compile(gf.graph.filtered(strategy.edge_types()), emb);
  const auto neg = negatives_for(project, gf.split);
  const fs::path dir = prepare_out(c.out_dir);

  std::vector<hgt::EpochLog> log;
  hgt::Model model;
  std::optional<std::string> failure;
  try {
    auto result = hgt::train(a.model, g, gf.split, neg, a.train);
    model = std::move(result.model);
    log = std::move(result.log);
  } catch (const hgt::TrainingDiverged& ex) {
    model = ex.last_good();
    log = ex.log();
    failure = ex.what();
  }
  timer.lap("train");

  std::string log_lines;
  for (const auto& e : log) log_lines += hgt::to_json(e).dump() + "\n";
  write_file(dir / "train_log.jsonl", log_lines);
  hgt::save_model(model, dir / "model.json");
  write_file(dir / "embeddings.vec", write_embeddings(emb));
  const json train_cfg = {{"model", hgt::to_json(a.model)},
                          {"train", hgt::to_json(a.train)},
                          {"strategies", strategy.to_string()},
                          {"embeddings", source}};
  write_json(dir / "train_config.json", train_cfg);
  m.config = {{"root", a.root}, {"graph", a.graph}, {"train_config", train_cfg}};
  m.seeds = {{"root", c.seed},
             {"init", derive_seed(c.seed, 0)},
             {"substitute_embeddings", derive_seed(c.seed, 4)},
             {"negatives", derive_seed(gf.split.seed, 7)}};
  finish(m, dir, {dir / "model.json", dir / "train_log.jsonl", dir / "embeddings.vec", dir / "train_config.json"});
  if (failure) throw RuntimeError(*failure + "; last good model written to " + (dir / "model.json").string());
  if (!log.empty()) {
    out << "epochs: " << log.size() << ", final loss " << log.back().loss << ", validation F1 " << log.back().val_f1
        << "\n";
  }
}

struct PredictArgs {
  std::string root;
  std::string graph;
  std::string model_dir;
  std::string pairs = "test";
};

void cmd_predict(const PredictArgs& a, const Common& c, RunManifest& m, std::ostream& out) {
  StageTimer timer(m);
  const fs::path md(a.model_dir);
  require_file((md / "model.json").string(), "model");
  require_file((md / "train_config.json").string(), "training configuration");
  m.hash_input(a.root);
  m.hash_input(a.graph);
  m.hash_input(md);
  const Project project = load_project(a.root, {});
  const GraphFile gf = load_graph(a.graph);
  const json cfg = read_json(md / "train_config.json");
  const auto train_cfg = hgt::train_config_from_json(cfg.at("train"));
  const auto strategy = strategies::StrategySet::parse(cfg.at("strategies").get<std::string>());
  const hgt::Model model = hgt::load_model(md / "model.json");
  const EmbeddingTable emb = load_embeddings(md / "embeddings.vec", project);
  timer.lap("load");
  const auto pairs = candidate_pairs(a.pairs, project, gf.split);
  const auto g = hgt::compile(gf.graph.filtered(strategy.edge_types()), emb);
  const auto preds = hgt::predict(model, g, pairs, train_cfg);
  timer.lap("predict");
  const fs::path dir = prepare_out(c.out_dir);
  write_file(dir / "predictions.tsv", predictions_tsv(preds));
  m.config = {{"root", a.root}, {"graph", a.graph}, {"model_dir", a.model_dir}, {"pairs", a.pairs}};
  m.seeds = {{"sampling", derive_seed(train_cfg.seed, 3)}};
  finish(m, dir, {dir / "predictions.tsv"});
  std::size_t positive = 0;
  for (const auto& p : preds) positive += p.label ? 1 : 0;
  out << "scored " << preds.size() << " pairs, " << positive << " predicted links\n";
}

struct EvalArgs {
  std::string root;
  std::string predictions;
  std::string name = "model";
};

void cmd_eval(const EvalArgs& a, const Common& c, RunManifest& m, std::ostream& out) {
  require_file(a.predictions, "predictions");
  m.hash_input(a.root);
  m.hash_input(a.predictions);
  const Project project = load_project(a.root, {});
  const PredictionFile f = parse_predictions(read_file(a.predictions), project);
  LinkSet truth;
  for (const auto& l : project.ground_truth()) {
    if (f.candidates.count(l) != 0) truth.insert(l);
  }
  const auto result = eval::evaluate(f.predicted, truth);
  const fs::path dir = prepare_out(c.out_dir);
  json j = eval::to_json(result);
  j["approach"] = a.name;
  j["project"] = project.name();
  j["candidates"] = f.candidates.size();
  write_json(dir / "eval.json", j);
  const std::string md = eval::to_markdown({{a.name, project.name(), result}});
  write_file(dir / "eval.md", md);
  m.config = {{"root", a.root}, {"predictions", a.predictions}, {"name", a.name}};
  finish(m, dir, {dir / "eval.json", dir / "eval.md"});
  out << md;
}

struct CompareArgs {
  std::string table;
  double alpha = 0.05;
};

/// `method<TAB>project<TAB>f1` rows; projects align by order of appearance.
std::map<std::string, std::vector<double>> parse_f1_table(const std::string& content) {
  std::map<std::string, std::vector<std::pair<std::string, double>>> rows;
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || line.rfind("method\t", 0) == 0) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 3) throw ValidationError("F1 table line " + std::to_string(line_no) + ": expected method, project, f1");
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(cols[2], &used);
      if (used != cols[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError("F1 table line " + std::to_string(line_no) + ": bad number '" + cols[2] + "'");
    }
    rows[cols[0]].emplace_back(cols[1], v);
  }
  std::map<std::string, std::vector<double>> out;
  std::vector<std::string> projects;
  for (const auto& [method, list] : rows) {
    std::vector<std::string> names;
    for (const auto& [p, v] : list) {
      names.push_back(p);
      out[method].push_back(v);
    }
    if (projects.empty()) {
      projects = names;
    } else if (names != projects) {
      throw ValidationError("method " + method + " does not cover the same projects in the same order");
    }
  }
  return out;
}

void cmd_compare(const CompareArgs& a, const Common& c, RunManifest& m, std::ostream& out) {
  require_file(a.table, "F1 table");
  m.hash_input(a.table);
  const auto report = eval::compare_methods(parse_f1_table(read_file(a.table)), a.alpha);
  const fs::path dir = prepare_out(c.out_dir);
  write_json(dir / "comparison.json", eval::to_json(report));
  write_file(dir / "comparison.md", eval::to_markdown(report));
  m.config = {{"table", a.table}, {"alpha", a.alpha}};
  finish(m, dir, {dir / "comparison.json", dir / "comparison.md"});
  out << eval::to_markdown(report);
}

struct PromptArgs {
  std::string root;
  std::string graph;
  std::string pairs = "test";
  std::string feedback_file;
  std::size_t max_code_tokens = 6000;
  double temperature = 1.0;
  std::string replay;
  std::string record;
  std::string endpoint;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string token_env = "TLR_LLM_TOKEN";
  std::size_t budget = 0;
  std::size_t retries = 3;
  std::size_t max_in_flight = 1;
  std::size_t backoff_ms = 500;
};

void cmd_promptgen(const PromptArgs& a, const Common& c, RunManifest& m, std::ostream& out) {
  StageTimer timer(m);
  m.hash_input(a.root);
  m.hash_input(a.graph);
  const Project project = load_project(a.root, {});
  const GraphFile gf = load_graph(a.graph);
  prompt::FeedbackLabels feedback = prompt::feedback_from_graph(gf.graph);
  if (!a.feedback_file.empty()) {
    require_file(a.feedback_file, "feedback file");
    m.hash_input(a.feedback_file);
    for (const auto& [pair, label] : prompt::parse_feedback_labels(read_file(a.feedback_file), project)) {
      feedback[pair] = label;
    }
  }
  prompt::PromptOptions opt;
  opt.max_code_tokens = a.max_code_tokens;
  opt.temperature = a.temperature;
  std::vector<prompt::PromptBundle> bundles;
  for (const auto& pair : candidate_pairs(a.pairs, project, gf.split)) {
    bundles.push_back(prompt::build_prompt(pair, project, gf.graph, feedback, opt));
  }
  timer.lap("build");
  const fs::path dir = prepare_out(c.out_dir);
  std::vector<fs::path> outputs{dir / "prompts.jsonl"};
  write_file(dir / "prompts.jsonl", prompt::dump_jsonl(bundles));
  m.config = {{"root", a.root},
              {"graph", a.graph},
              {"pairs", a.pairs},
              {"max_code_tokens", a.max_code_tokens},
              {"temperature", a.temperature},
              {"budget", a.budget},
              {"retries", a.retries},
              {"max_in_flight", a.max_in_flight}};

  std::unique_ptr<prompt::LlmClient> base;
  if (!a.replay.empty()) {
    require_file(a.replay, "replay file");
    m.hash_input(a.replay);
    base = std::make_unique<prompt::ReplayClient>(prompt::ReplayClient::load(a.replay));
    m.config["client"] = "replay";
  } else if (!a.endpoint.empty()) {
    prompt::HttpClientConfig hc;
    hc.base_url = a.endpoint;
    hc.path = a.path;
    hc.model = a.model;
    if (const char* tok = std::getenv(a.token_env.c_str())) hc.token = tok;
    base = std::make_unique<prompt::HttpLlmClient>(hc);
    m.config["client"] = {{"endpoint", a.endpoint}, {"path", a.path}, {"model", a.model}, {"token_env", a.token_env}};
  }
  if (!base) {
    finish(m, dir, outputs);
    out << "wrote " << bundles.size() << " prompts\n";
    return;
  }
  std::optional<prompt::RecordingClient> recorder;
  prompt::LlmClient* client = base.get();
  if (!a.record.empty()) {
    recorder.emplace(*base);
    client = &*recorder;
  }
  prompt::BatchOptions bo;
  bo.budget = a.budget;
  bo.max_retries = a.retries;
  bo.max_in_flight = a.max_in_flight;
  bo.initial_backoff = std::chrono::milliseconds(a.backoff_ms);
  const auto batch = prompt::run_batch(bundles, *client, bo);
  timer.lap("dispatch");

  json verdicts = json::array();
  std::vector<hgt::Prediction> preds;
  for (const auto& v : batch.verdicts) {
    verdicts.push_back(prompt::to_json(v));
    const bool yes = v.label == prompt::Label::Yes;
    preds.push_back({v.pair.req_id, v.pair.code_id, yes ? 1.0 : 0.0, yes});
  }
  write_json(dir / "verdicts.json", verdicts);
  write_json(dir / "batch.json", prompt::to_json(batch));
  write_file(dir / "predictions.tsv", predictions_tsv(preds));
  outputs.insert(outputs.end(), {dir / "verdicts.json", dir / "batch.json", dir / "predictions.tsv"});
  if (recorder) {
    write_file(a.record, recorder->to_jsonl());
    outputs.emplace_back(a.record);
  }
  finish(m, dir, outputs);
  out << "verdicts: " << batch.verdicts.size() << ", unparseable " << batch.unparseable << ", retries " << batch.retries
      << "\n";
  if (batch.budget_exhausted) {
    throw RuntimeError("request budget exhausted; " + std::to_string(batch.remaining.size()) +
                       " pairs left unsent (see batch.json)");
  }
  if (!batch.failures.empty()) {
    throw RuntimeError(std::to_string(batch.failures.size()) + " pairs failed (see batch.json)");
  }
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth);

int run_replay(const std::string& manifest_path, std::ostream& out, std::ostream& err, int depth) {
  require_file(manifest_path, "manifest");
  if (depth > 0) throw ValidationError("a replayed manifest cannot itself be a replay");
  const RunManifest m = manifest_from_json(read_json(manifest_path));
  return dispatch(m.argv, out, err, depth + 1);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
  CLI::App app{"Traceability link recovery workbench", "tlr"};
  app.set_config("--config", "", "key=value configuration file; command-line flags take precedence");
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Root seed for every random choice")->capture_default_str();
    sub->add_option("--out", common.out_dir, "Output directory")->capture_default_str();
  };

  DiffRatioArgs dr;
  auto* s_dr = app.add_subcommand("diffratio", "Difference Ratio of true versus sampled false links");
  s_dr->add_option("root", dr.root, "Corpus root")->required();
  s_dr->add_option("--resamples", dr.resamples, "Number of balanced false-link samples")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  add_common(s_dr);

  ExtractArgs ex;
  auto* s_ex = app.add_subcommand("extract", "Extract dependency, feedback and fine-grained strategy edges");
  s_ex->add_option("root", ex.root, "Corpus root")->required();
  s_ex->add_option("--feedback-fraction", ex.feedback_fraction, "Share of training links used as feedback")
      ->capture_default_str();
  s_ex->add_option("--top-fraction", ex.top_fraction, "Fine-grained rank threshold")->capture_default_str();
  s_ex->add_flag("--dump-structure", ex.dump_structure, "Also write structures.json");
  add_common(s_ex);

  TrainArgs tr;
  std::string mlp_dims = "512,256,128,64";
  auto* s_tr = app.add_subcommand("train", "Train the heterogeneous graph transformer");
  s_tr->add_option("root", tr.root, "Corpus root")->required();
  s_tr->add_option("--graph", tr.graph, "graph.json from extract")->required();
  s_tr->add_option("--embeddings", tr.embeddings, "Vector file; defaults to <root>/embeddings.vec or a substitute");
  s_tr->add_option("--dim", tr.dim, "Width of substitute embeddings")->capture_default_str();
  s_tr->add_option("--strategies", tr.strategies, "all, none, or a list of dependency,feedback,fine")
      ->capture_default_str();
  s_tr->add_option("--hidden", tr.model.hidden_dim, "Hidden width")->capture_default_str();
  s_tr->add_option("--heads", tr.model.heads, "Attention heads")->capture_default_str();
  s_tr->add_option("--layers", tr.model.layers, "HGT layers")->capture_default_str();
  s_tr->add_option("--mlp", mlp_dims, "Widths of f1..f4")->capture_default_str();
  s_tr->add_flag("--scalar-head", tr.model.scalar_head, "Score pairs with f5 instead of the inner product");
  s_tr->add_option("--epochs", tr.train.epochs, "Training epochs")->capture_default_str();
  s_tr->add_option("--lr", tr.train.learning_rate, "Learning rate")->capture_default_str();
  s_tr->add_option("--clip", tr.train.clip_norm, "Gradient norm clip")->capture_default_str();
  s_tr->add_option("--neighbor-samples", tr.train.neighbor_samples, "Sampled neighbors per relation (0 = all)")
      ->capture_default_str();
  s_tr->add_option("--negative-ratio", tr.train.negative_ratio, "Negatives per positive")->capture_default_str();
  s_tr->add_option("--threshold", tr.train.threshold, "Decision threshold")->capture_default_str();
  add_common(s_tr);

  PredictArgs pr;
  auto* s_pr = app.add_subcommand("predict", "Score requirement/code pairs with a trained model");
  s_pr->add_option("root", pr.root, "Corpus root")->required();
  s_pr->add_option("--graph", pr.graph, "graph.json from extract")->required();
  s_pr->add_option("--model-dir", pr.model_dir, "Output directory of train")->required();
  s_pr->add_option("--pairs", pr.pairs, "test, validation, train or all")->capture_default_str();
  add_common(s_pr);

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("eval", "Precision, recall and F1 of a predictions file");
  s_ev->add_option("root", ev.root, "Corpus root")->required();
  s_ev->add_option("--predictions", ev.predictions, "predictions.tsv")->required();
  s_ev->add_option("--name", ev.name, "Approach name in the report")->capture_default_str();
  add_common(s_ev);

  CompareArgs cm;
  auto* s_cm = app.add_subcommand("compare", "Pairwise Wilcoxon signed-rank tests over per-project F1");
  s_cm->add_option("--table", cm.table, "TSV of method, project, f1")->required();
  s_cm->add_option("--alpha", cm.alpha, "Significance level")->capture_default_str();
  add_common(s_cm);

  PromptArgs pa;
  auto* s_pa = app.add_subcommand("promptgen", "Build LLM prompt bundles and optionally collect verdicts");
  s_pa->add_option("root", pa.root, "Corpus root")->required();
  s_pa->add_option("--graph", pa.graph, "graph.json from extract")->required();
  s_pa->add_option("--pairs", pa.pairs, "test, validation, train or all")->capture_default_str();
  s_pa->add_option("--feedback-file", pa.feedback_file, "req_id, code_id, 0|1 lines of explicit feedback");
  s_pa->add_option("--max-code-tokens", pa.max_code_tokens, "Code truncation budget (0 = none)")->capture_default_str();
  s_pa->add_option("--temperature", pa.temperature, "Sampling temperature")->capture_default_str();
  auto* o_replay = s_pa->add_option("--replay", pa.replay, "Answer from recorded responses (JSON lines)");
  auto* o_endpoint = s_pa->add_option("--endpoint", pa.endpoint, "Base URL of an OpenAI-compatible endpoint");
  o_replay->excludes(o_endpoint);
  s_pa->add_option("--path", pa.path, "Chat completions path")->capture_default_str();
  s_pa->add_option("--model", pa.model, "Model name sent to the endpoint");
  s_pa->add_option("--token-env", pa.token_env, "Environment variable holding the bearer token")->capture_default_str();
  s_pa->add_option("--record", pa.record, "Write received responses here for later replay");
  s_pa->add_option("--budget", pa.budget, "Maximum requests including retries (0 = unlimited)")->capture_default_str();
  s_pa->add_option("--retries", pa.retries, "Retries per pair on transient failures")->capture_default_str();
  s_pa->add_option("--max-in-flight", pa.max_in_flight, "Concurrent requests")->capture_default_str();
  s_pa->add_option("--backoff-ms", pa.backoff_ms, "First retry delay")->capture_default_str();
  add_common(s_pa);

  std::string manifest_path;
  auto* s_rp = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  s_rp->add_option("manifest", manifest_path, "manifest.json")->required();

  std::vector<std::string> full{"tlr"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : full) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kValidationError;
  }

  if (s_rp->parsed()) return run_replay(manifest_path, out, err, depth);

  RunManifest m;
  m.argv = args;
  if (s_dr->parsed()) {
    m.command = "diffratio";
    cmd_diffratio(dr, common, m, out);
  } else if (s_ex->parsed()) {
    m.command = "extract";
    cmd_extract(ex, common, m, out);
  } else if (s_tr->parsed()) {
    m.command = "train";
    tr.model.mlp_dims.clear();
    std::stringstream ss(mlp_dims);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        tr.model.mlp_dims.push_back(static_cast<std::size_t>(std::stoul(item)));
      } catch (const std::exception&) {
        throw ValidationError("bad --mlp width '" + item + "'");
      }
    }
    cmd_train(tr, common, m, out);
  } else if (s_pr->parsed()) {
    m.command = "predict";
    cmd_predict(pr, common, m, out);
  } else if (s_ev->parsed()) {
    m.command = "eval";
    cmd_eval(ev, common, m, out);
  } else if (s_cm->parsed()) {
    m.command = "compare";
    cmd_compare(cm, common, m, out);
  } else if (s_pa->parsed()) {
    m.command = "promptgen";
    cmd_promptgen(pa, common, m, out);
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err, 0);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace tlr::cli
