// Minimal end-to-end run: synthesize contacts for a box, train a small model, propose poses
// for one touch, then localize the box with a particle filter.

#include <cstdio>

#include "skindiff/evaluation.hpp"

using namespace skindiff;

int main() {
  const Shape box = Box{0.04, 0.025};
  const TaxelArray array = build_array(0.05, 16, 0.005, 0.02);

  SynthesisConfig scfg;
  scfg.n_samples = 2000;
  scfg.seed = 1;
  const Dataset data = synthesize_dataset(box, array, scfg);

  TrainConfig tcfg;
  tcfg.epochs = 20;
  tcfg.hidden_width = 64;
  tcfg.observation_noise_std = 0.02;
  const DiffusionModel model =
      train(data.records, default_schedule(), tcfg, [](std::size_t e, double loss) {
        if ((e + 1) % 5 == 0) std::printf("epoch %zu loss %.4f\n", e + 1, loss);
      }).model;

  // One touch: compare the best of 100 proposals against the true pose.
  const auto points = boundary_points(box, kModelPoints);
  const ContactRecord& touch = data.records.front();
  double best = 1e9;
  for (const auto& q : sample(model, touch.observation, 100, 7)) best = std::min(best, add_error(points, q, touch.pose));
  std::printf("best of 100 proposals: ADD %.4f m\n", best);

  // Filter with diffusion proposals injected at every contact.
  FilterProblem problem;
  problem.object = box;
  problem.array = array;
  problem.contact_cfg.bounds = SampleBounds::around_sensor(0.05);
  problem.model_points = points;
  FilterConfig fcfg;
  fcfg.seed = 3;
  const PlanarPose truth = PlanarPose::from_angle(0.01, -0.02, 0.7);
  const FilterRun run = run_filter(problem, ddpm_sampler(model), truth, fcfg, 10);
  std::printf("prior MAP ADD %.4f m\n", run.prior_map_add);
  for (const auto& s : run.steps) std::printf("contact %2zu  MAP ADD %.4f m  ESS %.1f\n", s.contact_index, s.map_add,
                                              s.effective_sample_size);
  return 0;
}
