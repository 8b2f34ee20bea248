#include <doctest.h>

#include <cmath>
#include <random>

#include "doeforge/errors.hpp"
#include "doeforge/refcell.hpp"
#include "doeforge/td3.hpp"

using namespace doeforge;
using namespace doeforge::td3;
using doctest::Approx;

namespace {

Transition tagged(double tag) {
  Transition t;
  t.s = env::Observation::Constant(tag);
  t.s2 = env::Observation::Constant(tag);
  t.r = tag;
  return t;
}

// Critic whose output is `value` for every input.
nn::MlpD constantCritic(double value) {
  nn::MlpD net(nn::criticSpec());
  net.mutableLayers().back().bias[0] = value;
  return net;
}

Batch singleton(double r, bool done) {
  Batch b{Eigen::MatrixXd::Constant(env::kObservationSize, 1, 0.3), Eigen::RowVectorXd::Zero(1),
          Eigen::RowVectorXd::Constant(1, r), Eigen::MatrixXd::Constant(env::kObservationSize, 1, 0.6),
          Eigen::RowVectorXd::Constant(1, done ? 1.0 : 0.0)};
  return b;
}

Batch randomBatch(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Batch b{Eigen::MatrixXd(env::kObservationSize, n), Eigen::RowVectorXd(n), Eigen::RowVectorXd(n),
          Eigen::MatrixXd(env::kObservationSize, n), Eigen::RowVectorXd(n)};
  for (Eigen::Index i = 0; i < b.s.size(); ++i) {
    b.s.data()[i] = u(rng);
    b.s2.data()[i] = u(rng);
  }
  for (int j = 0; j < n; ++j) {
    b.a[j] = 2.0 * u(rng) - 1.0;
    b.r[j] = u(rng) - 0.5;
    b.done[j] = u(rng) < 0.1 ? 1.0 : 0.0;
  }
  return b;
}

bool sameNets(const AgentNets& a, const AgentNets& b) {
  return a.actor == b.actor && a.actor_target == b.actor_target && a.critic1 == b.critic1 && a.critic2 == b.critic2 &&
         a.critic_target1 == b.critic_target1 && a.critic_target2 == b.critic_target2;
}

env::EnvConfig shortEpisodes(int steps) {
  env::EnvConfig c;
  c.max_episode_steps = steps;
  return c;
}

}  // namespace

TEST_SUITE("td3") {
  TEST_CASE("ring buffer overwrites the oldest entry") {
    ReplayBuffer buf(2);
    buf.push(tagged(1));
    buf.push(tagged(2));
    buf.push(tagged(3));
    const auto c = buf.contents();
    REQUIRE(c.size() == 2);
    CHECK(c[0].r == 2.0);
    CHECK(c[1].r == 3.0);
    CHECK_THROWS_AS(buf.sample(3, *std::make_unique<std::mt19937_64>(1)), ValidationError);
    Transition bad = tagged(0);
    bad.a = 1.5;
    CHECK_THROWS_AS(buf.push(bad), ValidationError);
  }

  TEST_CASE("sampling is seeded and uniform") {
    ReplayBuffer buf(10);
    for (int i = 0; i < 10; ++i) buf.push(tagged(i));
    std::mt19937_64 r1(5), r2(5);
    CHECK(buf.sample(8, r1).r == buf.sample(8, r2).r);

    std::mt19937_64 rng(6);
    std::vector<int> counts(10, 0);
    const int n = 100000;
    for (int k = 0; k < n / 10; ++k) {
      const auto b = buf.sample(10, rng);
      for (int j = 0; j < 10; ++j) ++counts[static_cast<std::size_t>(b.r[j])];
    }
    const double sigma = std::sqrt(n * 0.1 * 0.9);
    for (int c : counts) CHECK(std::abs(c - n * 0.1) < 5.0 * sigma);
  }

  TEST_CASE("target Q arithmetic") {
    std::mt19937_64 rng(1);
    Td3Config cfg;
    AgentNets nets = AgentNets::initialize(cfg, rng);
    nets.critic_target1 = constantCritic(2.0);
    nets.critic_target2 = constantCritic(4.0);
    cfg.gamma = 0.5;
    CHECK(targetQ(singleton(1.0, false), nets, cfg, rng)[0] == Approx(2.0).epsilon(1e-15));
    CHECK(targetQ(singleton(1.0, true), nets, cfg, rng)[0] == 1.0);
    cfg.gamma = 0.0;
    CHECK(targetQ(singleton(0.7, false), nets, cfg, rng)[0] == 0.7);
  }

  TEST_CASE("clipped double-Q dominance on random nets") {
    std::mt19937_64 rng(2);
    Td3Config cfg;
    cfg.sigma_target = 0.0;
    const AgentNets nets = AgentNets::initialize(cfg, rng);
    const auto b = randomBatch(64, rng);
    const auto y = targetQ(b, nets, cfg, rng);
    Eigen::RowVectorXd a2 = nets.actor_target.forward(b.s2).row(0);
    const auto x2 = criticInput(b.s2, a2);
    const Eigen::RowVectorXd q1 = nets.critic_target1.forward(x2).row(0);
    const Eigen::RowVectorXd q2 = nets.critic_target2.forward(x2).row(0);
    for (int j = 0; j < 64; ++j) {
      const double upper = b.r[j] + cfg.gamma * (1.0 - b.done[j]) * std::max(q1[j], q2[j]);
      CHECK(y[j] <= upper + 1e-15);
    }
  }

  TEST_CASE("critic and actor loss arithmetic") {
    Eigen::RowVectorXd q1(1), q2(1), y(1);
    q1 << 1.0;
    q2 << 3.0;
    y << 2.0;
    CHECK(criticLoss(q1, q2, y) == 2.0);
    CHECK(criticLoss(y + 2.0 * (q1 - y), y + 2.0 * (q2 - y), y) == 4.0 * criticLoss(q1, q2, y));
    CHECK(criticLoss(y, y, y) == 0.0);
    Eigen::RowVectorXd a(1), c(1);
    a << 2.0;
    c << 4.0;
    CHECK(actorLoss(a, c) == -3.0);
  }

  TEST_CASE("critic update touches only the critics") {
    std::mt19937_64 rng(3);
    Td3Config cfg;
    AgentNets nets = AgentNets::initialize(cfg, rng);
    const AgentNets before = nets;
    const auto b = randomBatch(32, rng);
    criticUpdate(b, nets, cfg, rng);
    CHECK(nets.actor == before.actor);
    CHECK(nets.actor_target == before.actor_target);
    CHECK(nets.critic_target1 == before.critic_target1);
    CHECK(nets.critic_target2 == before.critic_target2);
    CHECK_FALSE(nets.critic1 == before.critic1);
    CHECK_FALSE(nets.critic2 == before.critic2);
  }

  TEST_CASE("exact critics give zero loss and no movement") {
    std::mt19937_64 rng(4);
    Td3Config cfg;
    cfg.gamma = 0.0;
    AgentNets nets = AgentNets::initialize(cfg, rng);
    nets.critic1 = constantCritic(0.25);
    nets.critic2 = constantCritic(0.25);
    nets.resetOptimizers(cfg);
    Batch b = randomBatch(16, rng);
    b.r.setConstant(0.25);
    const AgentNets before = nets;
    CHECK(criticUpdate(b, nets, cfg, rng) == 0.0);
    CHECK(nets.critic1 == before.critic1);
    CHECK(nets.critic2 == before.critic2);
  }

  TEST_CASE("actor update touches only the actor and ascends the critic") {
    std::mt19937_64 rng(5);
    Td3Config cfg;
    cfg.actor_lr = 1e-4;
    AgentNets nets = AgentNets::initialize(cfg, rng);
    // drop dropout so the post-update check sees the same actor map
    nets.actor = nn::MlpD::initialized(
        nn::MlpSpec{nn::actorSpec().sizes, nn::Activation::Relu, nn::Activation::Tanh, {0, 0, 0, 0}}, rng, 0.1);
    nets.resetOptimizers(cfg);
    const AgentNets before = nets;
    const auto b = randomBatch(64, rng);
    auto meanQ = [&](const AgentNets& n) {
      const Eigen::RowVectorXd a = n.actor.forward(b.s).row(0);
      const auto x = criticInput(b.s, a);
      return 0.5 * (n.critic1.forward(x).mean() + n.critic2.forward(x).mean());
    };
    const double q_before = meanQ(nets);
    const double loss = actorUpdate(b, nets, cfg, rng);
    CHECK(loss == Approx(-q_before).epsilon(1e-12));
    CHECK(meanQ(nets) >= q_before);
    CHECK(nets.critic1 == before.critic1);
    CHECK(nets.critic2 == before.critic2);
    CHECK(nets.actor_target == before.actor_target);
    CHECK(nets.critic_target1 == before.critic_target1);
    CHECK_FALSE(nets.actor == before.actor);
  }

  TEST_CASE("critics constant in the action give zero actor gradient") {
    std::mt19937_64 rng(6);
    Td3Config cfg;
    AgentNets nets = AgentNets::initialize(cfg, rng);
    nets.critic1 = constantCritic(1.0);
    nets.critic2 = constantCritic(-2.0);
    nets.resetOptimizers(cfg);
    const auto before = nets.actor;
    actorUpdate(randomBatch(8, rng), nets, cfg, rng);
    CHECK(nets.actor == before);
  }

  TEST_CASE("polyak arithmetic and target lag") {
    nn::MlpD target(nn::MlpSpec{{1, 1}, nn::Activation::Relu, nn::Activation::Identity, {}});
    nn::MlpD source = target;
    target.mutableLayers()[0].weight(0, 0) = 1.0;
    source.mutableLayers()[0].weight(0, 0) = 3.0;
    nn::MlpD t = target;
    polyakUpdate(t, source, 0.995);
    CHECK(t.layers()[0].weight(0, 0) == Approx(1.01).epsilon(1e-15));
    nn::MlpD same = target;
    polyakUpdate(same, source, 1.0);
    CHECK(same == target);
    polyakUpdate(same, source, 0.0);
    CHECK(same == source);

    std::mt19937_64 rng(7);
    auto a = nn::MlpD::initialized(nn::actorSpec(), rng);
    const auto b = nn::MlpD::initialized(nn::actorSpec(), rng);
    const auto a0 = a;
    polyakUpdate(a, b, 0.99);
    for (std::size_t l = 0; l < a.layers().size(); ++l) {
      CHECK((a.layers()[l].weight - a0.layers()[l].weight).norm() <=
            0.01 * (b.layers()[l].weight - a0.layers()[l].weight).norm() * (1 + 1e-12));
    }
    nn::MlpD wrong(nn::criticSpec());
    CHECK_THROWS_AS(polyakUpdate(wrong, b, 0.5), ValidationError);
  }

  TEST_CASE("targets start as exact copies") {
    std::mt19937_64 rng(8);
    const auto nets = AgentNets::initialize({}, rng);
    CHECK(nets.actor == nets.actor_target);
    CHECK(nets.critic1 == nets.critic_target1);
    CHECK(nets.critic2 == nets.critic_target2);
    CHECK_FALSE(nets.critic1 == nets.critic2);
  }

  TEST_CASE("update schedule over 100 post-warmup steps") {
    Td3Config cfg;
    cfg.batch_size = 16;
    cfg.warmup_steps = 50;
    cfg.max_steps = 150;
    cfg.eval_interval = 1000;
    cfg.patience = 0;
    std::vector<env::BatteryEnv> envs{env::BatteryEnv(ecm::refcell(), shortEpisodes(60))};
    env::BatteryEnv eval_env(ecm::refcell(), shortEpisodes(10));
    std::int64_t updates = 0;
    TrainHooks hooks;
    hooks.on_update = [&](std::int64_t, const UpdateCounters&) { ++updates; };
    const auto res = train(envs, eval_env, cfg, 1, hooks);
    CHECK(res.steps == 150);
    CHECK(updates == 101);  // steps 50..150 once the warmup transitions exist
    CHECK(res.counters.critic == 101);
    CHECK(res.counters.actor == 50);
    CHECK(res.counters.polyak == 50);
  }

  TEST_CASE("zero training steps return the initialized nets") {
    Td3Config cfg;
    cfg.max_steps = 0;
    std::vector<env::BatteryEnv> envs{env::BatteryEnv(ecm::refcell(), shortEpisodes(10))};
    env::BatteryEnv eval_env(ecm::refcell(), shortEpisodes(10));
    const auto res = train(envs, eval_env, cfg, 9);
    std::mt19937_64 rng(9);
    CHECK(sameNets(res.nets, AgentNets::initialize(cfg, rng)));
    CHECK(res.curve.empty());
  }

  TEST_CASE("training is deterministic for a fixed seed") {
    Td3Config cfg;
    cfg.batch_size = 32;
    cfg.warmup_steps = 100;
    cfg.max_steps = 300;
    cfg.eval_interval = 100;
    auto run = [&] {
      std::vector<env::BatteryEnv> envs{env::BatteryEnv(ecm::refcell(), shortEpisodes(120))};
      env::BatteryEnv eval_env(ecm::refcell(), shortEpisodes(50));
      return train(envs, eval_env, cfg, 42);
    };
    const auto a = run(), b = run();
    CHECK(curveCsv(a.curve) == curveCsv(b.curve));
    CHECK(a.curve.size() == 3);
    CHECK(sameNets(a.nets, b.nets));
  }

  TEST_CASE("checkpoint round trip") {
    std::mt19937_64 rng(10);
    const auto nets = AgentNets::initialize({}, rng);
    const auto j = nlohmann::json::parse(toJson(nets).dump());
    CHECK(sameNets(agentFromJson(j, {}), nets));
    CHECK(actorFromCheckpoint(j) == nets.actor);
    auto bad = j;
    bad["critic1"] = nn::toJson(nn::MlpD(nn::actorSpec()));
    CHECK_THROWS_AS(agentFromJson(bad, {}), ValidationError);
  }

  TEST_CASE("generation from a zero actor is a zero profile and deterministic") {
    env::BatteryEnv e(ecm::refcell(), shortEpisodes(50));
    const nn::MlpD zero(nn::actorSpec());
    const auto g = generateDoe(zero, e, 3);
    CHECK(g.profile.size() == 50);
    for (double c : g.profile.currents()) CHECK(c == 0.0);

    std::mt19937_64 rng(11);
    const auto actor = nn::MlpD::initialized(nn::actorSpec(), rng, 1.0);
    const auto p1 = generateDoe(actor, e, 4).profile;
    const auto p2 = generateDoe(actor, e, 4).profile;
    CHECK(p1 == p2);
    CHECK(generateDoe(actor, e, 4, 20).profile.size() == 20);
    CHECK_THROWS_AS(generateDoe(nn::MlpD(nn::criticSpec()), e, 4), ValidationError);
  }

  TEST_CASE("multi-episode generation is one continuous session") {
    env::BatteryEnv e(ecm::refcell(), shortEpisodes(40));
    std::mt19937_64 rng(12);
    const auto actor = nn::MlpD::initialized(nn::actorSpec(), rng, 1.0);
    const auto g = generateDoe(actor, e, 5, 0, 3);
    REQUIRE(g.log.records.size() == 120);
    for (std::size_t k = 0; k < g.log.records.size(); ++k) CHECK(g.log.records[k].t == static_cast<double>(k));
    CHECK(g.profile.duration() == 120.0);
    // replaying the whole profile on the plant reproduces every logged voltage
    const auto sim = profiles::simulate(g.profile, ecm::refcell(), g.log.initial);
    for (std::size_t k = 0; k < g.log.records.size(); ++k) {
      CHECK(sim.voltage[static_cast<Eigen::Index>(k)] == doctest::Approx(g.log.records[k].voltage).epsilon(1e-12));
    }
    const auto single = generateDoe(actor, e, 5, 0, 1);
    CHECK(single.log.records.size() == 40);
    for (std::size_t k = 0; k < 40; ++k) CHECK(single.log.records[k].current == g.log.records[k].current);
    CHECK_THROWS_AS(generateDoe(actor, e, 5, 0, 0), ValidationError);
  }

  TEST_CASE("resume keeps the cell state and starts fresh coverage") {
    env::BatteryEnv e(ecm::refcell(), shortEpisodes(10));
    e.reset(1);
    for (int k = 0; k < 10; ++k) e.step(-0.8);
    CHECK(e.done());
    const auto state = e.state();
    e.resume(state);
    CHECK(e.steps() == 0);
    CHECK_FALSE(e.done());
    CHECK(e.state().soc == state.soc);
    CHECK(e.state().v_rc == state.v_rc);
    CHECK(e.log().records.empty());
    CHECK(e.coverage().time_uniformity.isZero());
    auto bad = state;
    bad.v_rc = Eigen::VectorXd::Zero(1);
    CHECK_THROWS_AS(e.resume(bad), ValidationError);
  }

  TEST_CASE("config validation") {
    Td3Config c;
    c.gamma = 1.5;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.policy_delay = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.sigma_target = -0.1;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    const auto back = td3ConfigFromJson(toJson(Td3Config{}));
    CHECK(back.batch_size == 256);
    CHECK(back.rho == 0.995);
  }
}
