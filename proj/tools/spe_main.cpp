// Copyright (c) 2026 The spe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// spe: speaker embedding toolkit command line.
//   spe features  --out-dir DIR (--wav-dir DIR | --synthetic N U SEED)
//   spe train     --config FILE
//   spe embed     --checkpoint FILE --features MANIFEST --out FILE
//   spe score     --embeddings FILE --trials FILE --out FILE
//   spe eval      --scores FILE... [--trials FILE] [--p-target P]...

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spe/checkpoint.hpp"
#include "spe/config.hpp"
#include "spe/io.hpp"
#include "spe/metrics.hpp"
#include "spe/synthetic.hpp"
#include "spe/trainer.hpp"
#include "spe/wav.hpp"

namespace fs = std::filesystem;
using namespace spe;

namespace {

std::string resolve_manifest(const std::string& path) {
  if (fs::is_directory(path)) return (fs::path(path) / "manifest.txt").string();
  return path;
}

std::string utt_id_from_relpath(const fs::path& rel) {
  std::string id = rel.parent_path().empty()
                       ? rel.stem().string()
                       : (rel.parent_path() / rel.stem()).string();
  std::replace(id.begin(), id.end(), '/', '_');
  return id;
}

struct FeatureWriteStats {
  int written = 0;
  int skipped = 0;
  int failed = 0;
};

int cmd_features(const std::string& wav_dir, const std::string& out_dir,
                 const std::vector<int64_t>& synthetic, bool force) {
  SPE_CHECK(!wav_dir.empty() || synthetic.size() == 3,
            "features: need --wav-dir or --synthetic <n_speakers> "
            "<utts_per_speaker> <seed>");
  fs::create_directories(out_dir);
  std::vector<std::pair<std::string, std::string>> manifest;
  FeatureWriteStats stats;

  auto emit = [&](const std::string& id, const Tensor& feats) {
    std::string filename = id + ".fbnk";
    fs::path path = fs::path(out_dir) / filename;
    if (fs::exists(path) && !force) {
      ++stats.skipped;
    } else {
      write_fbnk(path.string(), feats);
      ++stats.written;
    }
    manifest.emplace_back(id, filename);
  };

  if (synthetic.size() == 3) {
    SPE_CHECK(synthetic[0] >= 1 && synthetic[1] >= 1,
              "features: synthetic counts must be >= 1");
    auto data = generate_synthetic_speakers(
        static_cast<int>(synthetic[0]), static_cast<int>(synthetic[1]),
        static_cast<uint64_t>(synthetic[2]));
    for (const auto& utt : data) emit(utt.id, utt.features);
  } else {
    SPE_CHECK(fs::is_directory(wav_dir),
              "features: --wav-dir " << wav_dir << " is not a directory");
    std::vector<fs::path> wavs;
    for (const auto& entry : fs::recursive_directory_iterator(wav_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        wavs.push_back(entry.path());
    std::sort(wavs.begin(), wavs.end());
    SPE_CHECK(!wavs.empty(), "features: no .wav files under " << wav_dir);
    for (const auto& wav_path : wavs) {
      std::string id =
          utt_id_from_relpath(fs::relative(wav_path, wav_dir));
      try {
        Waveform w = load_wav(wav_path.string());
        Tensor feats = sliding_mean_normalize(compute_fbank(w));
        emit(id, feats);
      } catch (const std::exception& e) {
        std::cerr << "features: " << e.what() << "\n";
        ++stats.failed;
      }
    }
  }

  write_manifest((fs::path(out_dir) / "manifest.txt").string(), manifest);
  std::cout << "features: wrote " << stats.written << ", skipped "
            << stats.skipped << ", failed " << stats.failed << ", manifest "
            << manifest.size() << " entries\n";
  return stats.failed == 0 ? 0 : 1;
}

// Loads a feature manifest and assigns dense speaker labels from the
// "<speaker>_" id prefix, in sorted speaker order.
std::vector<LabeledUtterance> load_dataset(const std::string& manifest_path,
                                           int* n_speakers) {
  auto entries = read_manifest(resolve_manifest(manifest_path));
  std::set<std::string> speakers;
  for (const auto& e : entries) speakers.insert(speaker_of_id(e.id));
  std::map<std::string, int> label;
  for (const auto& s : speakers) label.emplace(s, static_cast<int>(label.size()));

  std::vector<LabeledUtterance> data;
  data.reserve(entries.size());
  for (const auto& e : entries) {
    LabeledUtterance utt;
    utt.id = e.id;
    utt.speaker = label.at(speaker_of_id(e.id));
    utt.features = read_fbnk(e.path);
    validate_feature_matrix(utt.features, "load_dataset: " + e.id);
    data.push_back(std::move(utt));
  }
  *n_speakers = static_cast<int>(speakers.size());
  return data;
}

int cmd_train(const std::string& config_path) {
  TrainConfig cfg = parse_train_config(config_path);
  SPE_CHECK(!cfg.features.empty(), "train: config must set 'features'");
  SPE_CHECK(!cfg.out.empty(), "train: config must set 'out'");
  SPE_CHECK(fs::exists(resolve_manifest(cfg.features)),
            "train: feature manifest " << resolve_manifest(cfg.features)
                                       << " does not exist");
  fs::create_directories(cfg.out);

  int n_speakers = 0;
  auto data = load_dataset(cfg.features, &n_speakers);
  std::cout << "train: " << data.size() << " utterances from " << n_speakers
            << " speakers\n";

  SpeakerModel model(cfg, n_speakers);
  Trainer trainer(model, std::move(data), cfg);

  fs::path out(cfg.out);
  std::string log_path = (out / "metrics.log").string();
  {
    std::ofstream log(log_path, std::ios::app);
    log << "# epoch lr loss train_acc R\n";
  }

  TrainResult result = trainer.run([&](const EpochLog& log) {
    char line[160];
    std::snprintf(line, sizeof(line), "%d %.6g %.12g %.6f %.12g", log.epoch,
                  log.lr, log.mean_loss, log.accuracy, log.ring_R);
    {
      std::ofstream f(log_path, std::ios::app);
      f << line << "\n";
    }
    std::cout << "epoch=" << log.epoch << " lr=" << log.lr
              << " loss=" << log.mean_loss << " acc=" << log.accuracy;
    if (model.has_ring()) std::cout << " R=" << log.ring_R;
    std::cout << "\n";
    char name[64];
    std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", log.epoch + 1);
    save_checkpoint((out / name).string(),
                    make_checkpoint(model, log.epoch + 1));
    return true;
  });

  save_checkpoint((out / "final.ckpt").string(),
                  make_checkpoint(model, static_cast<int>(result.epochs.size())));
  std::cout << "train: finished " << result.epochs.size() << " epochs, "
            << result.steps << " steps, final loss "
            << result.epochs.back().mean_loss << ", final acc "
            << result.epochs.back().accuracy << "\n";
  return 0;
}

int cmd_embed(const std::string& checkpoint_path,
              const std::string& features_path, const std::string& out_path) {
  auto model = model_from_checkpoint(load_checkpoint(checkpoint_path));
  auto entries = read_manifest(resolve_manifest(features_path));
  EmbeddingMap embs;
  embs.reserve(entries.size());
  for (const auto& e : entries) {
    Tensor feats = read_fbnk(e.path);
    validate_feature_matrix(feats, "embed: " + e.id);
    embs.emplace_back(e.id, extract_embedding(*model, feats));
  }
  write_embd(out_path, embs);
  std::cout << "embed: " << embs.size() << " embeddings of dim "
            << embs.front().second.size() << " -> " << out_path << "\n";
  return 0;
}

int cmd_score(const std::string& embeddings_path,
              const std::string& trials_path, const std::string& out_path) {
  EmbeddingMap embs = read_embd(embeddings_path);
  std::map<std::string, const std::vector<double>*> by_id;
  for (const auto& [id, vec] : embs) by_id[id] = &vec;

  auto trials = read_trials(trials_path);
  std::set<std::string> missing;
  for (const auto& t : trials) {
    if (!by_id.count(t.enroll_id)) missing.insert(t.enroll_id);
    if (!by_id.count(t.test_id)) missing.insert(t.test_id);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += " " + id;
    throw Error("score: trial ids missing from embedding file:" + list);
  }

  std::vector<ScoredTrial> scored;
  scored.reserve(trials.size());
  for (const auto& t : trials)
    scored.push_back({t.enroll_id, t.test_id,
                      cosine_score(*by_id.at(t.enroll_id),
                                   *by_id.at(t.test_id))});
  write_scores(out_path, scored);
  std::cout << "score: " << scored.size() << " trials -> " << out_path << "\n";
  return 0;
}

std::vector<LabeledScore> labeled_scores_for(const std::string& score_path,
                                             const std::string& trials_path) {
  if (trials_path.empty()) return read_labeled_scores(score_path);
  auto trials = read_trials(trials_path);
  std::map<std::pair<std::string, std::string>, bool> label;
  for (const auto& t : trials) label[{t.enroll_id, t.test_id}] = t.is_target;
  auto scores = read_scores(score_path);
  std::vector<LabeledScore> out;
  out.reserve(scores.size());
  for (const auto& s : scores) {
    auto it = label.find({s.enroll_id, s.test_id});
    SPE_CHECK(it != label.end(), "eval: trial (" << s.enroll_id << ", "
                                                 << s.test_id
                                                 << ") not in trial file");
    out.push_back({it->second, s.score});
  }
  return out;
}

std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", p);
  return buf;
}

int cmd_eval(const std::vector<std::string>& score_paths,
             const std::string& trials_path,
             std::vector<double> p_targets) {
  if (p_targets.empty()) p_targets = {0.01, 0.001};
  for (double p : p_targets)
    SPE_CHECK(p > 0 && p < 1,
              "eval: --p-target " << p << " outside (0, 1)");

  struct RunReport {
    std::string name;
    EerResult eer;
    std::vector<DcfResult> dcfs;
  };
  std::vector<RunReport> reports;
  for (const auto& path : score_paths) {
    auto labeled = labeled_scores_for(path, trials_path);
    RunReport rep;
    rep.name = fs::path(path).stem().string();
    rep.eer = compute_eer(labeled);
    for (double p : p_targets) rep.dcfs.push_back(compute_min_dcf(labeled, p));
    reports.push_back(std::move(rep));
  }

  // one row per run, then machine-readable key=value blocks
  std::printf("# %-24s %8s", "run", "eer%");
  for (double p : p_targets)
    std::printf(" %12s", ("dcf@" + format_p(p)).c_str());
  std::printf("\n");
  for (const auto& rep : reports) {
    std::printf("  %-24s %8.4f", rep.name.c_str(), 100.0 * rep.eer.eer);
    for (const auto& dcf : rep.dcfs) std::printf(" %12.4f", dcf.min_dcf);
    std::printf("\n");
  }
  for (const auto& rep : reports) {
    std::printf("run=%s\n", rep.name.c_str());
    std::printf("eer=%.4f\n", rep.eer.eer);
    std::printf("eer_pct=%.4f\n", 100.0 * rep.eer.eer);
    std::printf("eer_threshold=%.6f\n", rep.eer.threshold);
    for (size_t i = 0; i < p_targets.size(); ++i) {
      std::string p = format_p(p_targets[i]);
      std::printf("min_dcf_p%s=%.4f\n", p.c_str(), rep.dcfs[i].min_dcf);
      std::printf("min_dcf_threshold_p%s=%.6f\n", p.c_str(),
                  rep.dcfs[i].threshold);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spe: speaker embeddings with spatial pyramid encoding"};
  app.require_subcommand(1);

  std::string wav_dir, out_dir;
  std::vector<int64_t> synthetic;
  bool force = false;
  auto* features = app.add_subcommand("features", "extract fbank features");
  features->add_option("--wav-dir", wav_dir, "directory of .wav files");
  features->add_option("--out-dir", out_dir, "output directory")->required();
  features
      ->add_option("--synthetic", synthetic,
                   "generate a synthetic dataset: n_speakers utts seed")
      ->expected(3);
  features->add_flag("--force", force, "rewrite existing feature files");

  std::string config_path;
  auto* train = app.add_subcommand("train", "train a speaker model");
  train->add_option("--config", config_path, "key=value config file")
      ->required();

  std::string ckpt_path, feat_path, out_path;
  auto* embed = app.add_subcommand("embed", "extract utterance embeddings");
  embed->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  embed->add_option("--features", feat_path, "feature manifest")->required();
  embed->add_option("--out", out_path, "output embedding file")->required();

  std::string emb_path, trials_path, score_out;
  auto* score = app.add_subcommand("score", "cosine-score trials");
  score->add_option("--embeddings", emb_path, "embedding file")->required();
  score->add_option("--trials", trials_path, "trial list")->required();
  score->add_option("--out", score_out, "output score file")->required();

  std::vector<std::string> score_files;
  std::string eval_trials;
  std::vector<double> p_targets;
  auto* eval = app.add_subcommand("eval", "compute EER and minDCF");
  eval->add_option("--scores", score_files, "score file(s)")
      ->required()
      ->take_all();
  eval->add_option("--trials", eval_trials,
                   "trial list with labels (otherwise scores are '<0|1> "
                   "<score>' lines)");
  eval->add_option("--p-target", p_targets, "DCF target prior(s)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*features) return cmd_features(wav_dir, out_dir, synthetic, force);
    if (*train) return cmd_train(config_path);
    if (*embed) return cmd_embed(ckpt_path, feat_path, out_path);
    if (*score) return cmd_score(emb_path, trials_path, score_out);
    if (*eval) return cmd_eval(score_files, eval_trials, p_targets);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
