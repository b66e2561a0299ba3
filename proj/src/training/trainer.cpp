#include <cstdio>
#include <fstream>
#include <ostream>

#include "mre/checkpoint.hpp"
#include "mre/errors.hpp"
#include "mre/seeding.hpp"
#include "mre/training.hpp"

namespace mre {

namespace {

constexpr std::size_t kMaxConsecutiveSkips = 10;

std::filesystem::path step_checkpoint(const std::filesystem::path& dir, std::uint64_t step) {
  char name[48];
  std::snprintf(name, sizeof name, "step_%07llu.ckpt", static_cast<unsigned long long>(step));
  return dir / "checkpoints" / name;
}

}  // namespace

TrainTrace train(MreNet& net, std::span<const Subject* const> training, const TrainConfig& cfg,
                 const TrainOptions& options) {
  const ModelConfig& mc = net.config();
  if (training.empty()) throw UsageError("train needs at least one annotated volume");
  for (const Subject* s : training) {
    if (s->image.channels != mc.in_channels) {
      throw ConfigError("training volume has " + std::to_string(s->image.channels) + " channels, model expects " +
                        std::to_string(mc.in_channels));
    }
  }
  const OhemGroups groups = resolve_groups(cfg, mc.K, training);
  ParamStore& store = net.params();

  const bool files = !options.out_dir.empty();
  const auto final_ckpt = options.out_dir / "model.ckpt";
  std::ofstream loss_csv;
  if (files) {
    std::filesystem::create_directories(options.out_dir / "checkpoints");
    if (options.resume && std::filesystem::exists(final_ckpt)) {
      load_checkpoint(store, final_ckpt);
    } else {
      store.set_step(0);
    }
    const auto csv_path = options.out_dir / "loss.csv";
    const bool fresh = store.step() == 0 || !std::filesystem::exists(csv_path);
    loss_csv.open(csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (!loss_csv) throw UsageError("cannot open " + csv_path.string());
    if (fresh) loss_csv << "iter,loss,eta\n";
  }

  TrainTrace trace;
  std::size_t consecutive_skips = 0;
  for (std::uint64_t it = store.step(); it < cfg.iterations; it = store.step()) {
    std::mt19937_64 rng = seeded_rng({cfg.seed, 0x7a11, it});
    std::vector<Patch> patches;
    patches.reserve(cfg.batch);
    std::uniform_int_distribution<std::size_t> pick(0, training.size() - 1);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const Subject& s = *training[pick(rng)];
      patches.push_back(sample_patch(s, cfg.patch, rng));
      augment_patch(patches.back(), cfg.aug, rng);
    }
    PatchBatch batch = make_batch(patches);

    ForwardResult fr = net.forward(batch.images, batch.frames, Mode::train);
    std::vector<std::uint8_t> keep;
    if (cfg.ohem_on) {
      OhemResult sel = ohem_select(voxel_nll(fr.log_posterior, batch.labels), batch.labels, groups, cfg.N_Lg);
      if (sel.fallback) {
        ++trace.ohem_fallbacks;
        if (options.log) *options.log << "warning: iteration " << it << " has no minority voxels; OHEM fallback\n";
      }
      keep = std::move(sel.keep);
    } else {
      keep.assign(batch.labels.size(), 1);
    }
    Tensor loss = dml_loss(fr.log_posterior, batch.labels, keep);
    const double eta_t = scheduled_eta(cfg.eta, cfg.step_size, it);
    store.backward(loss);
    try {
      adam_step(store, eta_t);
      consecutive_skips = 0;
    } catch (const NumericError& e) {
      ++trace.skipped_steps;
      if (options.log) *options.log << "warning: iteration " << it << " skipped: " << e.what() << "\n";
      if (++consecutive_skips >= kMaxConsecutiveSkips) throw;
      store.set_step(it + 1);
    }
    trace.loss.push_back(loss.item());
    trace.eta.push_back(eta_t);
    if (files) {
      char line[96];
      std::snprintf(line, sizeof line, "%llu,%.17g,%.17g\n", static_cast<unsigned long long>(it), loss.item(), eta_t);
      loss_csv << line << std::flush;
      const std::uint64_t done = store.step();
      if (options.checkpoint_every && done % options.checkpoint_every == 0 && done < cfg.iterations) {
        save_checkpoint(store, step_checkpoint(options.out_dir, done));
        save_checkpoint(store, final_ckpt);
      }
    }
    if (options.log && options.log_every && (it + 1) % options.log_every == 0) {
      *options.log << "iter " << it + 1 << "/" << cfg.iterations << " loss " << loss.item() << " eta " << eta_t
                   << "\n";
    }
  }
  if (files) save_checkpoint(store, final_ckpt);
  return trace;
}

}  // namespace mre
