#include "iplforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "iplforge/decoder.hpp"
#include "iplforge/error.hpp"
#include "iplforge/metrics.hpp"
#include "iplforge/rng.hpp"

namespace iplforge {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> items;
  std::istringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::string format_wer(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

const LanguageConfig* find_lang(const FamilyConfig& family,
                                const std::string& id) {
  for (const auto& lang : family.languages) {
    if (lang.lang_id == id) return &lang;
  }
  return nullptr;
}

}  // namespace

ArchConfig parse_arch_config(const std::vector<ConfigBlock>& blocks,
                             ArchConfig defaults) {
  ArchConfig arch = defaults;
  for (const auto& block : blocks) {
    if (block.kind != "arch") continue;
    arch.feature_dim =
        static_cast<int>(block.get_int("feature_dim", arch.feature_dim));
    arch.encoder_dim =
        static_cast<int>(block.get_int("encoder_dim", arch.encoder_dim));
    arch.label_dim =
        static_cast<int>(block.get_int("label_dim", arch.label_dim));
    arch.joiner_dim =
        static_cast<int>(block.get_int("joiner_dim", arch.joiner_dim));
    arch.downsample_factor =
        static_cast<int>(block.get_int("downsample", arch.downsample_factor));
    const std::string attention = block.get("attention", "on");
    if (attention != "on" && attention != "off") {
      throw ConfigError("arch: attention must be 'on' or 'off'");
    }
    arch.use_attention = attention == "on";
  }
  return arch;
}

TrainConfig parse_train_config(const ConfigBlock& block) {
  TrainConfig cfg;
  cfg.steps = static_cast<int>(block.require_int("steps"));
  cfg.batch_size = static_cast<int>(block.require_int("batch"));
  cfg.learning_rate = block.require_double("lr");
  cfg.eval_every = static_cast<int>(block.require_int("eval_every"));
  cfg.seed = static_cast<std::uint64_t>(block.require_int("seed"));
  cfg.beta1 = block.get_double("beta1", cfg.beta1);
  cfg.beta2 = block.get_double("beta2", cfg.beta2);
  cfg.epsilon = block.get_double("epsilon", cfg.epsilon);
  cfg.grad_clip_norm = block.get_double("clip", cfg.grad_clip_norm);
  return cfg;
}

Curriculum parse_curriculum(const std::vector<ConfigBlock>& blocks) {
  Curriculum cur;
  cur.family = parse_family_config(blocks);
  cur.data = parse_data_config(blocks);
  cur.arch = parse_arch_config(blocks);

  for (const auto& block : blocks) {
    if (block.kind == "data") {
      cur.data_seed = static_cast<std::uint64_t>(block.get_int("seed", 1));
    } else if (block.kind == "tokenizer") {
      TokenizerSpec tok;
      tok.name = block.require("name");
      tok.languages = split_list(block.require("languages"));
      tok.size = static_cast<int>(block.require_int("size"));
      cur.tokenizers.push_back(std::move(tok));
    } else if (block.kind == "stage") {
      StageSpec stage;
      stage.stage_ref = block.require("stage_ref");
      stage.languages = split_list(block.require("languages"));
      const std::string weighting = block.require("weighting");
      if (weighting == "NW") {
        stage.weighting = StageSpec::Weighting::kNW;
      } else if (weighting == "BL") {
        stage.weighting = StageSpec::Weighting::kBL;
      } else {
        throw ConfigError("stage " + stage.stage_ref +
                          ": weighting must be NW or BL");
      }
      const std::string source = block.require("source");
      if (source == "reference") {
        stage.source = TranscriptSource::reference();
      } else if (source.rfind("pseudo:", 0) == 0) {
        stage.source = TranscriptSource::pseudo(source.substr(7));
      } else {
        throw ConfigError("stage " + stage.stage_ref +
                          ": source must be 'reference' or 'pseudo:<ref>'");
      }
      const std::string warm = block.require("warm_start");
      stage.warm_start_from = warm == "none" ? "" : warm;
      const std::string select = block.require("select");
      if (select != "none") {
        try {
          stage.select_fraction = std::stod(select);
        } catch (const std::exception&) {
          throw ConfigError("stage " + stage.stage_ref +
                            ": select must be 'none' or a fraction");
        }
      }
      stage.tokenizer_ref = block.require("tokenizer");
      stage.train_cfg = parse_train_config(block);
      cur.stages.push_back(std::move(stage));
    }
  }

  cur.arch.feature_dim = cur.family.feature_dim;
  if (cur.data.dev_counts.size() != 1 || cur.data.test_counts.size() != 1) {
    throw ConfigError("expected exactly one dev and one test language");
  }
  const std::string& dev_lang = cur.data.dev_counts.begin()->first;
  const std::string& test_lang = cur.data.test_counts.begin()->first;
  if (dev_lang != test_lang) {
    throw ConfigError("dev language " + dev_lang +
                      " differs from test language " + test_lang);
  }
  cur.target_lang = test_lang;
  return cur;
}

void validate_curriculum(const Curriculum& cur) {
  if (cur.data.dev_counts.at(cur.target_lang) < 1 ||
      cur.data.test_counts.at(cur.target_lang) < 1) {
    throw CurriculumError("dev and test sets must be nonempty");
  }
  std::set<std::string> tokenizer_names;
  for (const auto& tok : cur.tokenizers) {
    if (!tokenizer_names.insert(tok.name).second) {
      throw CurriculumError("duplicate tokenizer name: " + tok.name);
    }
    if (tok.size < 4) {
      throw CurriculumError("tokenizer " + tok.name + " size is too small");
    }
    if (tok.languages.empty()) {
      throw CurriculumError("tokenizer " + tok.name + " lists no languages");
    }
    for (const auto& lang : tok.languages) {
      if (!find_lang(cur.family, lang)) {
        throw CurriculumError("tokenizer " + tok.name +
                              " references unknown language " + lang);
      }
      auto it = cur.data.bl_counts.find(lang);
      if (it == cur.data.bl_counts.end() || it->second < 1) {
        throw CurriculumError("tokenizer " + tok.name + " needs balanced data for " +
                              lang);
      }
    }
  }

  std::set<std::string> seen_refs;
  for (const auto& stage : cur.stages) {
    if (stage.stage_ref.empty()) throw CurriculumError("empty stage_ref");
    if (seen_refs.count(stage.stage_ref)) {
      throw CurriculumError("duplicate stage_ref: " + stage.stage_ref);
    }
    if (!tokenizer_names.count(stage.tokenizer_ref)) {
      throw CurriculumError("stage " + stage.stage_ref +
                            " references unknown tokenizer " +
                            stage.tokenizer_ref);
    }
    if (stage.languages.empty()) {
      throw CurriculumError("stage " + stage.stage_ref + " lists no languages");
    }
    for (const auto& lang : stage.languages) {
      if (!find_lang(cur.family, lang)) {
        throw CurriculumError("stage " + stage.stage_ref +
                              " references unknown language " + lang);
      }
      const auto& counts = stage.weighting == StageSpec::Weighting::kNW
                               ? cur.data.nw_counts
                               : cur.data.bl_counts;
      auto it = counts.find(lang);
      if (it == counts.end() || it->second < 1) {
        throw CurriculumError("stage " + stage.stage_ref + " has no data for " +
                              lang);
      }
    }
    if (!stage.warm_start_from.empty() &&
        !seen_refs.count(stage.warm_start_from)) {
      throw CurriculumError("stage " + stage.stage_ref +
                            " warm-starts from unknown or later stage " +
                            stage.warm_start_from);
    }
    if (stage.source.kind == TranscriptSource::kPseudo) {
      if (!seen_refs.count(stage.source.stage_ref)) {
        throw CurriculumError("stage " + stage.stage_ref +
                              " decodes with unknown or later stage " +
                              stage.source.stage_ref);
      }
    } else if (stage.source.kind != TranscriptSource::kReference) {
      throw CurriculumError("stage " + stage.stage_ref +
                            " must train on reference or pseudo transcripts");
    }
    if (stage.select_fraction) {
      if (stage.source.kind != TranscriptSource::kPseudo) {
        throw CurriculumError("stage " + stage.stage_ref +
                              " selects by certainty without pseudo data");
      }
      if (!(*stage.select_fraction > 0.0 && *stage.select_fraction <= 1.0)) {
        throw CurriculumError("stage " + stage.stage_ref +
                              " select fraction must lie in (0,1]");
      }
    }
    stage.train_cfg.validate();
    seen_refs.insert(stage.stage_ref);
  }
}

Manifest select_by_certainty(const Manifest& manifest, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw SelectionError("selection fraction must lie in (0,1]");
  }
  for (const auto& rec : manifest.records) {
    if (!rec.certainty) {
      throw SelectionError("record " + rec.utt_id + " has no certainty");
    }
  }
  std::vector<std::size_t> order(manifest.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const UttRecord& ra = manifest.records[a];
    const UttRecord& rb = manifest.records[b];
    if (*ra.certainty != *rb.certainty) return *ra.certainty > *rb.certainty;
    return ra.utt_id < rb.utt_id;
  });
  const auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(order.size())));
  Manifest out;
  out.base_dir = manifest.base_dir;
  for (std::size_t i = 0; i < keep && i < order.size(); ++i) {
    out.records.push_back(manifest.records[order[i]]);
  }
  return out;
}

const StageResult& Registry::find(const std::string& stage_ref) const {
  for (const auto& row : rows) {
    if (row.stage_ref == stage_ref) return row;
  }
  throw CurriculumError("stage not in registry: " + stage_ref);
}

std::filesystem::path Registry::model_file(const StageResult& row) const {
  return root / row.model_path;
}

std::filesystem::path Registry::vocab_file(const StageResult& row) const {
  return root / row.vocab_path;
}

void save_registry(const std::filesystem::path& path,
                   const Registry& registry) {
  std::ofstream out(path);
  if (!out) throw CurriculumError("cannot write registry: " + path.string());
  for (const auto& row : registry.rows) {
    out << row.stage_ref << '\t' << row.model_path.generic_string() << '\t'
        << row.vocab_path.generic_string() << '\t' << format_wer(row.dev_wer)
        << '\n';
  }
  if (!out.flush()) {
    throw CurriculumError("cannot write registry: " + path.string());
  }
}

Registry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CurriculumError("cannot open registry: " + path.string());
  Registry registry;
  registry.root = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw CurriculumError("registry line " + std::to_string(lineno) +
                            ": expected 4 fields");
    }
    StageResult row;
    row.stage_ref = fields[0];
    row.model_path = fields[1];
    row.vocab_path = fields[2];
    try {
      row.dev_wer = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw CurriculumError("registry line " + std::to_string(lineno) +
                            ": bad dev_wer");
    }
    registry.rows.push_back(std::move(row));
  }
  return registry;
}

void save_werr_report(const std::filesystem::path& path,
                      const WerrReport& report) {
  std::ofstream out(path);
  if (!out) throw CurriculumError("cannot write report: " + path.string());
  char werr_buf[32];
  for (const auto& row : report.rows) {
    std::snprintf(werr_buf, sizeof(werr_buf), "%.2f", row.werr);
    out << row.stage_ref << '\t' << format_wer(row.dev_wer) << '\t'
        << format_wer(row.test_wer) << '\t' << werr_buf << '\n';
  }
  if (!out.flush()) {
    throw CurriculumError("cannot write report: " + path.string());
  }
}

RunContext prepare_run(const Curriculum& curriculum,
                       const std::filesystem::path& run_dir) {
  RunContext ctx;
  ctx.curriculum = curriculum;
  ctx.run_dir = run_dir;
  std::error_code ec;
  fs::create_directories(run_dir / "tokenizers", ec);
  if (ec) {
    throw CurriculumError("cannot create run directory: " + run_dir.string());
  }

  std::cerr << "[run] generating datasets\n";
  ctx.family = build_family(curriculum.family, curriculum.data_seed);
  ctx.data = generate_datasets(ctx.family, curriculum.data,
                               curriculum.data_seed, run_dir / "data");

  const Manifest test_truth =
      load_manifest(ctx.data.test(curriculum.target_lang));
  const Manifest test_ref =
      load_manifest(ctx.data.test_ref(curriculum.target_lang));
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < test_truth.records.size(); ++i) {
    pairs.emplace_back(test_truth.records[i].transcript,
                       test_ref.records[i].transcript);
  }
  ctx.reference_wer = corpus_wer(pairs);
  std::cerr << "[run] reference transcriber test WER " << ctx.reference_wer
            << "\n";

  for (const auto& tok : curriculum.tokenizers) {
    std::map<std::string, Manifest> manifests;
    for (const auto& lang : tok.languages) {
      manifests[lang] = load_manifest(ctx.data.bl_ref(lang));
    }
    const Vocab vocab = train_bpe(pool_transcripts(manifests), tok.size);
    const fs::path rel = fs::path("tokenizers") / (tok.name + ".vocab");
    save_vocab(run_dir / rel, vocab);
    ctx.vocab_paths[tok.name] = rel;
    std::cerr << "[run] tokenizer " << tok.name << ": " << vocab.size()
              << " tokens\n";
  }
  ctx.registry.root = run_dir;
  return ctx;
}

StageResult run_stage(RunContext& ctx, const StageSpec& stage) {
  for (const auto& row : ctx.registry.rows) {
    if (row.stage_ref == stage.stage_ref) {
      throw CurriculumError("stage already run: " + stage.stage_ref);
    }
  }
  std::cerr << "[stage " << stage.stage_ref << "] starting\n";
  const fs::path stage_rel = fs::path("stages") / stage.stage_ref;
  const fs::path stage_dir = ctx.run_dir / stage_rel;
  std::error_code ec;
  fs::create_directories(stage_dir, ec);
  if (ec) {
    throw CurriculumError("cannot create stage directory: " +
                          stage_dir.string());
  }

  auto vocab_it = ctx.vocab_paths.find(stage.tokenizer_ref);
  if (vocab_it == ctx.vocab_paths.end()) {
    throw CurriculumError("stage " + stage.stage_ref +
                          " references unknown tokenizer " +
                          stage.tokenizer_ref);
  }
  const Vocab vocab = load_vocab(ctx.run_dir / vocab_it->second);

  ArchConfig arch = ctx.curriculum.arch;
  arch.vocab_size = vocab.size() - 1;

  Model model;
  if (stage.warm_start_from.empty()) {
    model = init_model(
        arch, derive_seed(stage.train_cfg.seed,
                          "stage-init:" + stage.stage_ref, 0));
  } else {
    const StageResult& prior_row = ctx.registry.find(stage.warm_start_from);
    const Model prior = load_model(ctx.registry.model_file(prior_row));
    auto spec_it = ctx.specs_by_ref.find(stage.warm_start_from);
    if (spec_it == ctx.specs_by_ref.end()) {
      throw CurriculumError("no spec recorded for stage " +
                            stage.warm_start_from);
    }
    const WarmStartMode mode =
        spec_it->second.tokenizer_ref == stage.tokenizer_ref
            ? WarmStartMode::kFull
            : WarmStartMode::kEncoderOnly;
    model = warm_start(prior, arch.vocab_size, mode,
                       derive_seed(stage.train_cfg.seed,
                                   "stage-warm:" + stage.stage_ref, 0));
  }

  Manifest train_input;
  train_input.base_dir = ctx.data.root;
  for (const auto& lang : stage.languages) {
    const fs::path path = stage.weighting == StageSpec::Weighting::kNW
                              ? ctx.data.nw_ref(lang)
                              : ctx.data.bl_ref(lang);
    const Manifest part = load_manifest(path);
    train_input.records.insert(train_input.records.end(),
                               part.records.begin(), part.records.end());
  }

  if (stage.source.kind == TranscriptSource::kPseudo) {
    const std::string& src = stage.source.stage_ref;
    const StageResult& src_row = ctx.registry.find(src);
    const Model src_model = load_model(ctx.registry.model_file(src_row));
    const Vocab src_vocab = load_vocab(ctx.registry.vocab_file(src_row));
    std::cerr << "[stage " << stage.stage_ref << "] decoding "
              << train_input.records.size() << " utts with " << src << "\n";
    train_input = batch_decode(src_model, train_input, src_vocab, src);
    save_manifest(stage_dir / "pseudo.tsv", train_input);

    std::vector<const UttRecord*> by_certainty;
    for (const auto& rec : train_input.records) by_certainty.push_back(&rec);
    std::sort(by_certainty.begin(), by_certainty.end(),
              [](const UttRecord* a, const UttRecord* b) {
                if (*a->certainty != *b->certainty) {
                  return *a->certainty > *b->certainty;
                }
                return a->utt_id < b->utt_id;
              });
    std::ofstream cert(stage_dir / "certainty.tsv");
    if (!cert) {
      throw CurriculumError("cannot write certainty distribution for " +
                            stage.stage_ref);
    }
    for (const UttRecord* rec : by_certainty) {
      cert << rec->utt_id << '\t' << format_wer(*rec->certainty) << '\n';
    }
    if (!cert.flush()) {
      throw CurriculumError("cannot write certainty distribution for " +
                            stage.stage_ref);
    }

    if (stage.select_fraction) {
      train_input = select_by_certainty(train_input, *stage.select_fraction);
      save_manifest(stage_dir / "selected.tsv", train_input);
    }
  } else if (stage.source.kind != TranscriptSource::kReference) {
    throw CurriculumError("stage " + stage.stage_ref +
                          " must train on reference or pseudo transcripts");
  }
  save_manifest(stage_dir / "train_input.tsv", train_input);

  const Manifest dev =
      load_manifest(ctx.data.dev(ctx.curriculum.target_lang));
  const TrainOutcome outcome =
      train(model, train_input, dev, vocab, stage.train_cfg, stage_dir);
  save_train_report(stage_dir / "report.tsv", outcome.report);

  const TrainReport& report = outcome.report;
  fs::path best_path;
  for (const auto& ckpt : report.checkpoints) {
    if (ckpt.step == report.best_step) best_path = ckpt.path;
  }
  fs::copy_file(best_path, stage_dir / "model.ckpt",
                fs::copy_options::overwrite_existing, ec);
  if (ec) {
    throw CurriculumError("cannot copy best checkpoint for " +
                          stage.stage_ref);
  }

  StageResult row;
  row.stage_ref = stage.stage_ref;
  row.model_path = stage_rel / "model.ckpt";
  row.vocab_path = vocab_it->second;
  row.dev_wer = report.best_dev_wer;
  ctx.registry.rows.push_back(row);
  save_registry(ctx.run_dir / "registry.tsv", ctx.registry);
  ctx.specs_by_ref[stage.stage_ref] = stage;
  std::cerr << "[stage " << stage.stage_ref << "] best step "
            << report.best_step << " dev_wer " << report.best_dev_wer << "\n";
  return row;
}

std::vector<IplPassResult> run_ipl(RunContext& ctx,
                                   const std::string& base_stage, int passes,
                                   double fraction,
                                   const TrainConfig& cfg_template) {
  if (passes < 1) throw CurriculumError("ipl passes must be at least 1");
  auto base_it = ctx.specs_by_ref.find(base_stage);
  if (base_it == ctx.specs_by_ref.end()) {
    throw CurriculumError("ipl base stage has not run: " + base_stage);
  }
  const StageSpec base_spec = base_it->second;
  const Manifest test =
      load_manifest(ctx.data.test(ctx.curriculum.target_lang));

  std::vector<IplPassResult> results;
  std::string current = base_stage;
  for (int pass = 1; pass <= passes; ++pass) {
    StageSpec stage;
    stage.stage_ref = base_stage + "-P" + std::to_string(pass) + "C";
    stage.languages = base_spec.languages;
    stage.weighting = base_spec.weighting;
    stage.source = TranscriptSource::pseudo(current);
    stage.tokenizer_ref = base_spec.tokenizer_ref;
    stage.warm_start_from = current;
    stage.select_fraction = fraction;
    stage.train_cfg = cfg_template;

    IplPassResult result;
    result.pass = pass;
    result.stage = run_stage(ctx, stage);
    const Model model =
        load_model(ctx.registry.model_file(result.stage));
    const Vocab vocab = load_vocab(ctx.registry.vocab_file(result.stage));
    result.row.stage_ref = stage.stage_ref;
    result.row.dev_wer = result.stage.dev_wer;
    result.row.test_wer = evaluate(model, test, vocab);
    result.row.werr = werr(ctx.reference_wer, result.row.test_wer);
    results.push_back(std::move(result));
    current = stage.stage_ref;
  }
  return results;
}

WerrReport build_report(const Registry& registry,
                        const Manifest& test_manifest, double reference_wer) {
  WerrReport report;
  for (const auto& row : registry.rows) {
    const Model model = load_model(registry.model_file(row));
    const Vocab vocab = load_vocab(registry.vocab_file(row));
    WerrReport::Row out;
    out.stage_ref = row.stage_ref;
    out.dev_wer = row.dev_wer;
    out.test_wer = evaluate(model, test_manifest, vocab);
    out.werr = werr(reference_wer, out.test_wer);
    report.rows.push_back(std::move(out));
  }
  return report;
}

WerrReport run_curriculum(const Curriculum& curriculum,
                          const std::filesystem::path& run_dir) {
  validate_curriculum(curriculum);
  RunContext ctx = prepare_run(curriculum, run_dir);
  for (const auto& stage : curriculum.stages) {
    run_stage(ctx, stage);
  }
  const Manifest test =
      load_manifest(ctx.data.test(curriculum.target_lang));
  const WerrReport report =
      build_report(ctx.registry, test, ctx.reference_wer);
  save_werr_report(run_dir / "report.tsv", report);
  std::ofstream ref(run_dir / "reference.txt");
  if (!ref || !(ref << "reference_wer\t" << format_wer(ctx.reference_wer)
                    << "\n")
                   .flush()) {
    throw CurriculumError("cannot write reference WER");
  }
  return report;
}

}  // namespace iplforge
