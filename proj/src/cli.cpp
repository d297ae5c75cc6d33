#include "mmtod/cli.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmtod/config.hpp"
#include "mmtod/decoder.hpp"
#include "mmtod/error.hpp"
#include "mmtod/trainer.hpp"

namespace mmtod {
namespace {

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

bool parse_switch(const std::string& value, const char* flag) {
  if (value == "on") return true;
  if (value == "off") return false;
  throw UsageError(std::string(flag) + " must be 'on' or 'off'");
}

RunConfig read_run_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

const Dialogue& find_dialogue(const Corpus& corpus, const std::string& id) {
  if (corpus.empty()) throw DataError("corpus is empty");
  if (id.empty()) return corpus.front();
  for (const auto& d : corpus)
    if (d.dialogue_id == id) return d;
  throw UsageError("unknown dialogue id '" + id + "'");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string describe_api(const TurnPrediction& tp) {
  const DomainManifest& m = default_manifest(tp.domain);
  const auto a = static_cast<std::size_t>(tp.api.action.action);
  std::string s = m.actions.at(a) + " (p=" + fmt(tp.api.action_probs.at(a), 3) + ")";
  s += " attributes: [";
  std::vector<std::string> names;
  if (tp.domain == Domain::Furniture) {
    names.push_back(m.attributes.at(static_cast<std::size_t>(tp.api.action.attribute)));
  } else {
    for (std::size_t i = 0; i < tp.api.action.attribute_flags.size(); ++i)
      if (tp.api.action.attribute_flags[i]) names.push_back(m.attributes.at(i));
  }
  for (std::size_t i = 0; i < names.size(); ++i) s += (i ? ", " : "") + names[i];
  return s + "]";
}

}  // namespace

Corpus load_corpus_any(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (normalize_space(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      return load_corpus(path, parse_domain(j.at("domain").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": line 1: " + e.what());
    } catch (const UsageError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  throw DataError(path.string() + ": corpus is empty");
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-domain task-oriented dialogue model: synthesize, train, evaluate, generate"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic JSONL corpus");
  std::uint64_t synth_seed = 0;
  int synth_n = 0;
  std::string synth_domain, synth_out;
  bool action_conditioned = false;
  synth->add_option("--seed", synth_seed, "RNG seed")->default_val(0);
  synth->add_option("--n", synth_n, "Number of dialogues")->required()->check(CLI::PositiveNumber);
  synth->add_option("--domain", synth_domain, "furniture or fashion")
      ->required()
      ->check(CLI::IsMember({"furniture", "fashion"}));
  synth->add_option("--out", synth_out, "Output JSONL path")->required();
  synth->add_flag("--action-conditioned", action_conditioned,
                  "Draw actions independently of the context; responses depend only on the action");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints");
  std::string config_path, furniture_path, fashion_path, out_dir, dev_furniture_path, dev_fashion_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> lm_epochs_override, mt_epochs_override;
  train_cmd->add_option("--config", config_path, "JSON config with sections serializer, model, train");
  train_cmd->add_option("--furniture", furniture_path, "Furniture training corpus (JSONL)");
  train_cmd->add_option("--fashion", fashion_path, "Fashion training corpus (JSONL)");
  train_cmd->add_option("--out-dir", out_dir, "Directory for checkpoints, vocab and the training log")->required();
  train_cmd->add_option("--dev-furniture", dev_furniture_path, "Furniture dev corpus for periodic evaluation");
  train_cmd->add_option("--dev-fashion", dev_fashion_path, "Fashion dev corpus for periodic evaluation");
  train_cmd->add_option("--seed", seed_override, "Override train.seed");
  train_cmd->add_option("--lm-epochs", lm_epochs_override, "Override train.lm_epochs");
  train_cmd->add_option("--mt-epochs", mt_epochs_override, "Override train.mt_epochs");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Decode every turn and score all sub-tasks");
  std::string ckpt_path, corpus_path, candidates_path, report_path, predictions_path;
  std::string gt_action = "on", slot_matching = "pooled";
  int max_new_tokens = 128;
  eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  eval_cmd->add_option("--corpus", corpus_path, "Evaluation corpus (JSONL)")->required();
  eval_cmd->add_option("--candidates", candidates_path,
                       "Candidate pools (JSONL); generated and written here when absent");
  eval_cmd->add_option("--report", report_path, "Write the metrics report (JSON) here");
  eval_cmd->add_option("--predictions", predictions_path, "Write per-turn predictions (JSONL) here");
  eval_cmd->add_option("--gt-action", gt_action, "Force the gold action after <EOB> (on|off)")->default_val("on");
  eval_cmd->add_option("--slot-matching", slot_matching, "pooled or intent-scoped slot credit")
      ->default_val("pooled")
      ->check(CLI::IsMember({"pooled", "intent"}));
  eval_cmd->add_option("--max-new-tokens", max_new_tokens, "Decoding budget per turn")
      ->default_val(128)
      ->check(CLI::PositiveNumber);

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Print belief, API and response for one turn");
  std::string gen_ckpt, gen_corpus, dialogue_id, gen_gt_action = "on";
  int turn = 0, gen_budget = 128;
  gen_cmd->add_option("--ckpt", gen_ckpt, "Checkpoint file")->required();
  gen_cmd->add_option("--corpus", gen_corpus, "Corpus holding the dialogue (JSONL)")->required();
  gen_cmd->add_option("--dialogue", dialogue_id, "Dialogue id (default: the first dialogue)");
  gen_cmd->add_option("--turn", turn, "0-based turn index")->required()->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--gt-action", gen_gt_action, "Force the gold action after <EOB> (on|off)")
      ->default_val("on");
  gen_cmd->add_option("--max-new-tokens", gen_budget, "Decoding budget")->default_val(128)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) {
      SynthOptions options;
      options.action_conditioned = action_conditioned;
      const Domain domain = parse_domain(synth_domain);
      const Corpus corpus = synth_corpus(synth_seed, synth_n, domain, options);
      write_corpus(synth_out, corpus);
      const std::vector<Corpus> one{corpus};
      const Vocab vocab = build_vocab(one, SerializerConfig{});
      out << "wrote " << corpus.size() << " " << domain_name(domain) << " dialogues to " << synth_out
          << " (mean turns " << fmt(mean_turns(corpus), 2) << ", vocab size " << vocab.size() << ")\n";
      return kExitOk;
    }

    if (*train_cmd) {
      RunConfig cfg = read_run_config(config_path);
      if (seed_override) cfg.train.seed = *seed_override;
      if (lm_epochs_override) cfg.train.lm_epochs = *lm_epochs_override;
      if (mt_epochs_override) cfg.train.mt_epochs = *mt_epochs_override;
      if (cfg.serializer.multi_domain && (furniture_path.empty() || fashion_path.empty()))
        throw UsageError("MD (serializer.multi_domain) is on, so both --furniture and --fashion are required");
      if (!cfg.serializer.multi_domain && furniture_path.empty() == fashion_path.empty())
        throw UsageError("MD (serializer.multi_domain) is off, so give exactly one of --furniture / --fashion");
      const Corpus furniture = furniture_path.empty() ? Corpus{} : load_corpus(furniture_path, Domain::Furniture);
      const Corpus fashion = fashion_path.empty() ? Corpus{} : load_corpus(fashion_path, Domain::Fashion);
      const Corpus dev_f = dev_furniture_path.empty() ? Corpus{} : load_corpus(dev_furniture_path, Domain::Furniture);
      const Corpus dev_s = dev_fashion_path.empty() ? Corpus{} : load_corpus(dev_fashion_path, Domain::Fashion);

      std::filesystem::create_directories(out_dir);
      write_text(std::filesystem::path(out_dir) / "config.json", to_json(cfg).dump(2) + "\n");
      TrainOptions options;
      options.out_dir = out_dir;
      if (!dev_f.empty()) options.dev_furniture = &dev_f;
      if (!dev_s.empty()) options.dev_fashion = &dev_s;
      options.on_epoch = [&](const EpochRecord& r) {
        out << "epoch " << r.epoch << " [" << (r.multi_task_phase ? "multi_task" : "lm") << "]";
        for (int k = 0; k < kNumTasks; ++k)
          if (r.batches[static_cast<std::size_t>(k)] > 0)
            out << " " << task_name(static_cast<TaskKind>(k)) << "="
                << fmt(r.mean_loss[static_cast<std::size_t>(k)]);
        if (r.dev) out << " dev_joint=" << fmt(r.dev->at("joint_accuracy").get<double>());
        out << "\n";
        out.flush();
      };
      const TrainResult result = train(furniture, fashion, cfg.serializer, cfg.model, cfg.train, options);
      out << "checkpoint: " << result.last_checkpoint.string() << "\n";
      return kExitOk;
    }

    if (*eval_cmd) {
      const TrainedModel model = load_checkpoint(ckpt_path);
      const Corpus corpus = load_corpus_any(corpus_path);
      std::vector<CandidatePool> pools;
      if (!candidates_path.empty() && std::filesystem::exists(candidates_path)) {
        pools = load_candidate_pools(candidates_path);
      } else {
        pools = make_candidate_pools(corpus);
        if (!candidates_path.empty()) save_candidate_pools(candidates_path, pools);
      }
      DecodeOptions decode;
      decode.max_new_tokens = static_cast<std::size_t>(max_new_tokens);
      decode.gt_action = parse_switch(gt_action, "--gt-action");
      const Evaluation ev = evaluate(model, corpus, pools, decode,
                                     slot_matching == "intent" ? SlotMatching::IntentScoped : SlotMatching::Pooled);
      if (!report_path.empty()) {
        auto j = ev.report.to_json();
        j["table_row"] = ev.report.table_row();
        write_text(report_path, j.dump(2) + "\n");
      }
      if (!predictions_path.empty()) {
        std::string lines;
        for (const auto& tp : ev.turns) lines += prediction_to_json(tp).dump() + "\n";
        write_text(predictions_path, lines);
      }
      out << MetricsReport::table_header() << "\n" << ev.report.table_row() << "\n";
      return kExitOk;
    }

    if (*gen_cmd) {
      const TrainedModel model = load_checkpoint(gen_ckpt);
      const Corpus corpus = load_corpus_any(gen_corpus);
      const Dialogue& d = find_dialogue(corpus, dialogue_id);
      if (static_cast<std::size_t>(turn) >= d.turns.size())
        throw UsageError("dialogue " + d.dialogue_id + " has " + std::to_string(d.turns.size()) +
                         " turns; --turn " + std::to_string(turn) + " is out of range");
      DecodeOptions decode;
      decode.max_new_tokens = static_cast<std::size_t>(gen_budget);
      decode.gt_action = parse_switch(gen_gt_action, "--gt-action");
      const TurnPrediction tp = decode_turn(model, d, static_cast<std::size_t>(turn), decode);
      out << "dialogue: " << d.dialogue_id << " turn " << turn << "\n";
      out << "belief: " << (tp.eob_found ? tp.belief_text : std::string("(no <EOB> generated)")) << "\n";
      out << "api: " << describe_api(tp) << "\n";
      if (tp.forced_action >= 0)
        out << "response action: " << special::action_token(tp.forced_action)
            << (decode.gt_action ? " (ground truth)" : " (predicted)") << "\n";
      out << "response: " << tp.response << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace mmtod
