#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "tangentlab/trainer.hpp"

using namespace tangentlab;

namespace {

std::vector<TaskDataset> permuted_stream(std::uint64_t seed, int T, int n, int d,
                                         int classes = 2) {
  TaskDataset base = generate_base(seed, n, d, classes);
  std::vector<TaskDataset> tasks;
  for (int t = 0; t < T; ++t) {
    TaskDataset task = permute_task(base, t);  // seed 0 keeps the base as task 1
    task.task_id = t + 1;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::vector<TaskDataset> rotated_stream(std::uint64_t seed, int T, int n, int d,
                                        double step_degrees, int classes = 2) {
  TaskDataset base = generate_base(seed, n, d, classes);
  std::vector<TaskDataset> tasks;
  for (int t = 0; t < T; ++t) {
    TaskDataset task = rotate_task(base, step_degrees * t);
    task.task_id = t + 1;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

TrainConfig tight_linearized(Algorithm alg, double ridge, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.algorithm = alg;
  cfg.learning_rate_auto = true;
  cfg.ridge = ridge;
  cfg.steps_per_task = 300000;
  cfg.convergence_tolerance = 1e-11;
  cfg.regime = Regime::linearized;
  cfg.seed = seed;
  cfg.memory_cap_per_task = kFullMemory;
  return cfg;
}

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (int i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
  }
  return true;
}

}  // namespace

TEST(TrainTask, ZeroStepsLeaveWeightsUntouched) {
  Mlp net{{4, 10, 2}, Activation::relu, true};
  WeightVector w0 = init_weights(net, 7);
  TaskDataset task = generate_base(1, 20, 4, 2);
  task.task_id = 1;
  LinearizedModel lin = linearize(net, w0, task);
  TrainConfig cfg;
  cfg.steps_per_task = 0;
  cfg.learning_rate = 0.1;
  cfg.regime = Regime::linearized;
  WeightVector w1 = train_task(net, w0, task, nullptr, cfg, &lin);
  for (int i = 0; i < w0.size(); ++i) ASSERT_EQ(w0[i], w1[i]);
}

TEST(TrainTask, FirstTaskProjectedTrajectoryIsBitIdenticalToUnprojected) {
  Mlp net{{5, 20, 2}, Activation::relu, true};
  WeightVector w0 = init_weights(net, 3);
  TaskDataset task = generate_base(2, 20, 5, 2);
  task.task_id = 1;
  LinearizedModel lin = linearize(net, w0, task);
  OrthonormalBasis empty;
  for (Regime regime : {Regime::linearized, Regime::nonlinear}) {
    TrainConfig cfg;
    cfg.learning_rate_auto = true;
    cfg.steps_per_task = 200;
    cfg.regime = regime;
    const LinearizedModel* lp = regime == Regime::linearized ? &lin : nullptr;
    cfg.algorithm = Algorithm::sgd;
    WeightVector w_sgd = train_task(net, w0, task, &empty, cfg, lp);
    cfg.algorithm = Algorithm::ogd;
    WeightVector w_ogd = train_task(net, w0, task, &empty, cfg, lp);
    for (int i = 0; i < w_sgd.size(); ++i) ASSERT_EQ(w_sgd[i], w_ogd[i]);
  }
}

TEST(TrainTask, ConfigValidationCatchesBadFields) {
  Mlp net{{4, 8, 2}, Activation::relu, true};
  WeightVector w0 = init_weights(net, 1);
  TaskDataset task = generate_base(1, 10, 4, 2);
  LinearizedModel lin = linearize(net, w0, task);
  TrainConfig cfg;
  cfg.learning_rate = -1.0;
  EXPECT_THROW(train_task(net, w0, task, nullptr, cfg, &lin), ConfigError);
  cfg = TrainConfig{};
  cfg.regime = Regime::linearized;
  cfg.batch_size = 8;
  EXPECT_THROW(train_task(net, w0, task, nullptr, cfg, &lin), ConfigError);
  cfg = TrainConfig{};
  cfg.memory_cap_per_task = 0;
  EXPECT_THROW(train_task(net, w0, task, nullptr, cfg, &lin), ConfigError);
  cfg = TrainConfig{};
  cfg.regime = Regime::linearized;
  EXPECT_THROW(train_task(net, w0, task, nullptr, cfg, nullptr), ConfigError);
}

TEST(TrainTask, EnforcedStabilityRejectsOversizedLearningRate) {
  Mlp net{{4, 30, 2}, Activation::relu, true};
  WeightVector w0 = init_weights(net, 5);
  TaskDataset task = generate_base(3, 15, 4, 2);
  task.task_id = 1;
  LinearizedModel lin = linearize(net, w0, task);
  TrainConfig cfg;
  cfg.learning_rate = 1e6;
  cfg.enforce_stable_lr = true;
  cfg.regime = Regime::linearized;
  EXPECT_THROW(train_task(net, w0, task, nullptr, cfg, &lin), ConfigError);
}

TEST(TrainTask, UnstableRateDivergesWithStepIndex) {
  Mlp net{{4, 30, 2}, Activation::relu, true};
  WeightVector w0 = init_weights(net, 5);
  TaskDataset task = generate_base(3, 15, 4, 2);
  task.task_id = 1;
  LinearizedModel lin = linearize(net, w0, task);
  Eigen::MatrixXd F = lin.feature_matrix(task.rows(task.train_idx),
                                         task.gtl_of(task.train_idx));
  const double unstable = 2.5 * max_stable_lr(gram_sym(F), 0.0);
  TrainConfig cfg;
  cfg.learning_rate = unstable;
  cfg.steps_per_task = 100000;
  cfg.regime = Regime::linearized;
  try {
    train_task(net, w0, task, nullptr, cfg, &lin);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.step, 0);
  }
}

TEST(TrainTask, ZeroRidgeReachesTinyTrainLossAtNinetyPercentOfStableRate) {
  Mlp net{{6, 50, 2}, Activation::relu, true};
  WeightVector w0 = init_weights(net, 9);
  TaskDataset task = generate_base(4, 20, 6, 2);
  task.task_id = 1;
  LinearizedModel lin = linearize(net, w0, task);
  TrainConfig cfg;
  cfg.learning_rate_auto = true;
  cfg.steps_per_task = 100000;
  cfg.convergence_tolerance = 0.0;
  cfg.regime = Regime::linearized;
  TrainStats stats;
  train_task(net, w0, task, nullptr, cfg, &lin, &stats);
  EXPECT_LE(stats.final_loss, 1e-6);
}

TEST(LinearizedEquivalence, TrainerMatchesClosedFormChain) {
  Mlp net{{6, 50, 2}, Activation::relu, true};
  for (bool project : {false, true}) {
    for (double ridge : {0.0, 0.1}) {
      std::vector<TaskDataset> tasks = rotated_stream(31, 3, 18, 6, 20.0);
      TrainConfig cfg = tight_linearized(project ? Algorithm::ogd : Algorithm::sgd, ridge, 5);
      ContinualRunResult run = run_continual(net, tasks, cfg);
      LinearizedModel lin = linearize(net, run.initial_weights, tasks.front());
      ContinualSolution sol = solve_stream(lin, tasks, ridge, project);

      const WeightVector& w_final = run.weight_checkpoints.back();
      double worst = 0.0;
      for (const TaskDataset& task : tasks) {
        for (int i = 0; i < task.n(); ++i) {
          const double by_trainer = linear_predict(lin, w_final, task.input(i), task.gtl[i]);
          const double by_formula = predict_recursive(sol, task.input(i), task.gtl[i]);
          worst = std::max(worst, std::abs(by_trainer - by_formula));
        }
      }
      EXPECT_LE(worst, 1e-5) << "project=" << project << " ridge=" << ridge;
    }
  }
}

TEST(LinearizedEquivalence, PerTaskWeightDisplacementMatchesClosedForm) {
  Mlp net{{6, 50, 2}, Activation::relu, true};
  for (bool project : {false, true}) {
    std::vector<TaskDataset> tasks = rotated_stream(33, 3, 15, 6, 25.0);
    TrainConfig cfg = tight_linearized(project ? Algorithm::ogd : Algorithm::sgd, 0.1, 6);
    ContinualRunResult run = run_continual(net, tasks, cfg);
    LinearizedModel lin = linearize(net, run.initial_weights, tasks.front());
    ContinualSolution sol = solve_stream(lin, tasks, 0.1, project);
    for (int t = 0; t < 3; ++t) {
      const WeightVector& before = t == 0 ? run.initial_weights : run.weight_checkpoints[t - 1];
      const double measured = (run.weight_checkpoints[t] - before).squaredNorm();
      const double predicted = weight_distance_sq(sol.tasks[t]);
      EXPECT_LE(std::abs(measured - predicted), 1e-6 * std::max(1.0, predicted))
          << "project=" << project << " task " << t + 1;
    }
  }
}

TEST(RunContinual, MemorizedPredictionsSurviveLaterTasksUnderProjection) {
  Mlp net{{6, 50, 2}, Activation::relu, true};
  std::vector<TaskDataset> tasks = permuted_stream(35, 3, 15, 6);
  TrainConfig cfg = tight_linearized(Algorithm::ogd, 0.0, 7);
  ContinualRunResult run = run_continual(net, tasks, cfg);
  LinearizedModel lin = linearize(net, run.initial_weights, tasks.front());
  double worst = 0.0;
  for (int k = 1; k <= 3; ++k) {
    for (const MemorySample& m : run.memory.samples.entries) {
      if (m.task_id != k) continue;
      const double at_own_end = linear_predict(lin, run.weight_checkpoints[k - 1], m.x, m.gtl);
      const double at_final = linear_predict(lin, run.weight_checkpoints[2], m.x, m.gtl);
      worst = std::max(worst, std::abs(at_final - at_own_end));
    }
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(RunContinual, DeterministicAndSeedSensitive) {
  Mlp net{{5, 16, 2}, Activation::relu, true};
  std::vector<TaskDataset> tasks = permuted_stream(21, 2, 15, 5);
  TrainConfig cfg;
  cfg.algorithm = Algorithm::ogd;
  cfg.learning_rate_auto = true;
  cfg.steps_per_task = 300;
  cfg.regime = Regime::linearized;
  cfg.seed = 11;
  ContinualRunResult a = run_continual(net, tasks, cfg);
  ContinualRunResult b = run_continual(net, tasks, cfg);
  EXPECT_TRUE(bitwise_equal(a.accuracy_matrix, b.accuracy_matrix));
  EXPECT_TRUE(bitwise_equal(a.memorized_accuracy, b.memorized_accuracy));
  EXPECT_TRUE(bitwise_equal(a.memorized_loss, b.memorized_loss));
  for (int t = 0; t < 2; ++t) {
    for (int i = 0; i < a.weight_checkpoints[t].size(); ++i) {
      ASSERT_EQ(a.weight_checkpoints[t][i], b.weight_checkpoints[t][i]);
    }
  }
  cfg.seed = 12;
  ContinualRunResult c = run_continual(net, tasks, cfg);
  EXPECT_GT((a.weight_checkpoints[0] - c.weight_checkpoints[0]).norm(), 0.0);
}

TEST(RunContinual, SingleTaskIsAlgorithmIndependent) {
  Mlp net{{5, 16, 2}, Activation::relu, true};
  std::vector<TaskDataset> tasks = permuted_stream(22, 1, 20, 5);
  std::vector<ContinualRunResult> results;
  for (Algorithm alg : {Algorithm::sgd, Algorithm::ogd, Algorithm::ogd_plus}) {
    TrainConfig cfg;
    cfg.algorithm = alg;
    cfg.learning_rate_auto = true;
    cfg.steps_per_task = 500;
    cfg.regime = Regime::linearized;
    cfg.seed = 4;
    results.push_back(run_continual(net, tasks, cfg));
  }
  ASSERT_EQ(results[0].accuracy_matrix.cols(), 1);
  for (int v = 1; v < 3; ++v) {
    EXPECT_TRUE(bitwise_equal(results[0].accuracy_matrix, results[v].accuracy_matrix));
    for (int i = 0; i < results[0].weight_checkpoints[0].size(); ++i) {
      ASSERT_EQ(results[0].weight_checkpoints[0][i], results[v].weight_checkpoints[0][i]);
    }
  }
}

TEST(RunContinual, IdenticalSecondTaskChangesNothingUnderProjection) {
  Mlp net{{6, 50, 2}, Activation::relu, true};
  TaskDataset base = generate_base(41, 15, 6, 2);
  std::vector<TaskDataset> tasks(2, base);
  tasks[0].task_id = 1;
  tasks[1].task_id = 2;
  TrainConfig cfg = tight_linearized(Algorithm::ogd, 0.0, 9);
  ContinualRunResult run = run_continual(net, tasks, cfg);
  EXPECT_EQ(run.accuracy_matrix(2, 0), run.accuracy_matrix(1, 0));
  // the second task's update is numerically nothing
  EXPECT_LE((run.weight_checkpoints[1] - run.weight_checkpoints[0]).norm(), 1e-5);
}

TEST(RunContinual, RejectsDuplicateTaskIdsAndShapeMismatches) {
  Mlp net{{5, 8, 2}, Activation::relu, true};
  std::vector<TaskDataset> tasks = permuted_stream(1, 2, 10, 5);
  tasks[1].task_id = tasks[0].task_id;
  TrainConfig cfg;
  cfg.regime = Regime::linearized;
  EXPECT_THROW(run_continual(net, tasks, cfg), ConfigError);
  std::vector<TaskDataset> wrong_dim = permuted_stream(1, 2, 10, 7);
  EXPECT_THROW(run_continual(net, wrong_dim, cfg), ConfigError);
  EXPECT_THROW(run_continual(net, {}, cfg), ConfigError);
}

TEST(RunContinual, MemoryCapBoundsStoredSamplesAndBasis) {
  Mlp net{{5, 20, 2}, Activation::relu, true};
  std::vector<TaskDataset> tasks = permuted_stream(23, 3, 25, 5);  // 20 train per task
  TrainConfig cfg;
  cfg.algorithm = Algorithm::ogd;
  cfg.learning_rate_auto = true;
  cfg.steps_per_task = 200;
  cfg.regime = Regime::linearized;
  cfg.memory_cap_per_task = 5;
  ContinualRunResult run = run_continual(net, tasks, cfg);
  for (int k = 1; k <= 3; ++k) EXPECT_EQ(run.memory.samples.count_for_task(k), 5);
  for (auto& [task, cnt] : run.memory_basis_counts) {
    EXPECT_GE(cnt, 1);
    EXPECT_LE(cnt, 5);
  }
}

TEST(MemoryGradient, VanishesAtTheInterpolatingOptimum) {
  Mlp net{{6, 50, 2}, Activation::relu, true};
  WeightVector w0 = init_weights(net, 13);
  TaskDataset task = generate_base(51, 20, 6, 2);
  task.task_id = 1;
  LinearizedModel lin = linearize(net, w0, task);
  ContinualSolution sol{lin, {}};
  TaskSolution ts = solve_task(sol, task, 0.0, FeatureMapKind::raw());
  WeightVector w_star = w0 + ts.weight_update();
  SampleMemory mem;
  mem.per_task_cap = kFullMemory;
  store_task_samples(mem, task);
  WeightVector g_start = agem_memory_gradient(net, &lin, Regime::linearized, w0, mem, 1);
  WeightVector g_star = agem_memory_gradient(net, &lin, Regime::linearized, w_star, mem, 1);
  EXPECT_LE(g_star.norm(), 1e-8 * (1.0 + g_start.norm()));
}

TEST(MemoryGradient, StaysZeroUnderProjectedLaterTraining) {
  Mlp net{{6, 50, 2}, Activation::relu, true};
  std::vector<TaskDataset> tasks = rotated_stream(53, 3, 15, 6, 30.0);
  TrainConfig cfg = tight_linearized(Algorithm::ogd, 0.0, 15);
  ContinualRunResult run = run_continual(net, tasks, cfg);
  LinearizedModel lin = linearize(net, run.initial_weights, tasks.front());
  for (int k = 1; k < 3; ++k) {
    WeightVector g0 = agem_memory_gradient(net, &lin, Regime::linearized,
                                           run.initial_weights, run.memory.samples, k);
    WeightVector gT = agem_memory_gradient(net, &lin, Regime::linearized,
                                           run.weight_checkpoints[2], run.memory.samples, k);
    EXPECT_LE(gT.norm(), 1e-8 * (1.0 + g0.norm())) << "task " << k;
  }
}

TEST(MemoryGradient, GrowsUnderUnprojectedTrainingOnDissimilarTasks) {
  Mlp net{{6, 50, 2}, Activation::relu, true};
  std::vector<TaskDataset> tasks = rotated_stream(53, 3, 15, 6, 30.0);
  TrainConfig cfg = tight_linearized(Algorithm::sgd, 0.0, 15);
  ContinualRunResult run = run_continual(net, tasks, cfg);
  LinearizedModel lin = linearize(net, run.initial_weights, tasks.front());
  WeightVector gT = agem_memory_gradient(net, &lin, Regime::linearized,
                                         run.weight_checkpoints[2], run.memory.samples, 1);
  EXPECT_GT(gT.norm(), 1e-3);
}

TEST(ForgettingProbe, FinalTaskHasZeroProbeAndProjectionProtectsEarlierOnes) {
  Mlp net{{6, 50, 2}, Activation::relu, true};
  std::vector<TaskDataset> tasks = permuted_stream(57, 3, 15, 6);
  TrainConfig cfg = tight_linearized(Algorithm::ogd, 0.0, 17);
  ContinualRunResult run = run_continual(net, tasks, cfg);
  EXPECT_DOUBLE_EQ(forgetting_probe(run, 3), 0.0);
  EXPECT_NEAR(forgetting_probe(run, 1), 0.0, 1e-9);
  EXPECT_NEAR(forgetting_probe(run, 2), 0.0, 1e-9);
  EXPECT_THROW(forgetting_probe(run, 0), DimensionError);
  EXPECT_THROW(forgetting_probe(run, 4), DimensionError);
}

TEST(ForgettingProbe, UnprojectedNonlinearTrainingForgetsDissimilarTasks) {
  Mlp net{{8, 16, 4}, Activation::relu, true};
  std::vector<TaskDataset> tasks = permuted_stream(59, 5, 40, 8, 4);
  TrainConfig cfg;
  cfg.algorithm = Algorithm::sgd;
  cfg.learning_rate_auto = true;
  cfg.steps_per_task = 4000;
  cfg.regime = Regime::nonlinear;
  cfg.seed = 19;
  cfg.memory_cap_per_task = kFullMemory;
  ContinualRunResult run = run_continual(net, tasks, cfg);
  // sanity: each task was actually learned when it was current
  EXPECT_GE(run.memorized_accuracy(1, 0), 0.9);
  EXPECT_GE(run.memorized_accuracy(5, 4), 0.9);
  EXPECT_LT(forgetting_probe(run, 1), 0.0);
}

TEST(MiniBatchTraining, DeterministicAndLearns) {
  Mlp net{{6, 24, 2}, Activation::relu, true};
  std::vector<TaskDataset> tasks = permuted_stream(61, 2, 30, 6);
  TrainConfig cfg;
  cfg.algorithm = Algorithm::ogd;
  cfg.learning_rate_auto = true;
  cfg.steps_per_task = 2000;
  cfg.batch_size = 8;
  cfg.regime = Regime::nonlinear;
  cfg.seed = 23;
  ContinualRunResult a = run_continual(net, tasks, cfg);
  ContinualRunResult b = run_continual(net, tasks, cfg);
  EXPECT_TRUE(bitwise_equal(a.accuracy_matrix, b.accuracy_matrix));
  for (int i = 0; i < a.weight_checkpoints[1].size(); ++i) {
    ASSERT_EQ(a.weight_checkpoints[1][i], b.weight_checkpoints[1][i]);
  }
  EXPECT_GE(a.memorized_accuracy(2, 1), 0.9);  // current task learned
}
