#include "dualplay/simulation.hpp"

#include <array>
#include <cmath>
#include <string_view>

namespace dualplay {
namespace {

enum : std::uint64_t { kCorpusStream = 11, kProposerStream = 12, kSolverStream = 13 };

constexpr std::array<std::string_view, 24> kSubjects = {
    "orchard",   "railway",  "bakery",    "glacier",  "harbor",   "library",
    "vineyard",  "foundry",  "observatory", "market", "canal",    "apiary",
    "quarry",    "festival", "monastery", "tannery",  "lighthouse", "granary",
    "printing",  "weaving",  "brewery",   "shipyard", "mill",     "theater"};

constexpr std::array<std::string_view, 6> kFrames = {
    "Records from the {} list deliveries by weight and by count.",
    "The {} kept ledgers of wages, hours and output for each season.",
    "Visitors to the {} often asked how the daily totals were computed.",
    "An old survey of the {} describes its layout in measured paces.",
    "Accounts of the {} mention shipments that were split and recombined.",
    "The history of the {} is told through its inventories and tallies."};

std::string fill(std::string_view frame, std::string_view subject) {
  std::string out(frame);
  out.replace(out.find("{}"), 2, subject);
  return out;
}

}  // namespace

void SimulationConfig::validate() const {
  if (!(proposer.difficulty_spread > 0.0)) throw ConfigError("difficulty_spread must be positive");
  auto rate = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  rate(proposer.format_error_rate, "format_error_rate");
  rate(proposer.wrong_answer_rate, "wrong_answer_rate");
  rate(solver_format_error_rate, "solver_format_error_rate");
  if (heldout_points == 0) throw ConfigError("heldout_points must be at least 1");
  if (heldout_max < heldout_min) throw ConfigError("heldout_max must not be below heldout_min");
  if (knowledge_pieces == 0) throw ConfigError("knowledge_pieces must be at least 1");
}

std::vector<double> SimulationConfig::heldout_grid() const {
  std::vector<double> grid;
  grid.reserve(heldout_points);
  if (heldout_points == 1) {
    grid.push_back(heldout_min);
    return grid;
  }
  const double step = (heldout_max - heldout_min) / static_cast<double>(heldout_points - 1);
  for (std::size_t i = 0; i < heldout_points; ++i) {
    grid.push_back(heldout_min + step * static_cast<double>(i));
  }
  return grid;
}

KnowledgeStore synthetic_knowledge(std::size_t pieces, std::uint64_t seed) {
  Rng rng(mix_seed(seed, kCorpusStream));
  std::vector<KnowledgePiece> out;
  out.reserve(pieces);
  for (std::size_t i = 0; i < pieces; ++i) {
    const auto subject = kSubjects[rng.uniform_index(kSubjects.size())];
    std::string text = fill(kFrames[rng.uniform_index(kFrames.size())], subject);
    text += ' ';
    text += fill(kFrames[rng.uniform_index(kFrames.size())], subject);
    out.push_back({static_cast<KnowledgeId>(i), text, count_whitespace_tokens(text)});
  }
  return KnowledgeStore::from_pieces(std::move(out));
}

SimulationResult run_simulation(const RunConfig& run, const RewardConfig& reward,
                                const SimulationConfig& sim, BatchSink& sink,
                                const KnowledgeStore* knowledge,
                                const std::function<void(const StepReport&)>& observer) {
  sim.validate();
  KnowledgeStore synthetic;
  if (knowledge == nullptr && !run.without_knowledge) {
    synthetic = synthetic_knowledge(sim.knowledge_pieces, run.seed);
    knowledge = &synthetic;
  }

  SimulatedProposer proposer({sim.proposer_initial_skill, kProposerStream, sim.proposer_learning_rate},
                             sim.proposer, run.seed);
  SimulatedSolver solver({sim.solver_initial_skill, kSolverStream, sim.solver_learning_rate},
                         run.seed, sim.solver_format_error_rate);
  const auto grid = sim.heldout_grid();

  Orchestrator orchestrator(run, reward, knowledge, proposer, solver, sink);
  orchestrator.set_step_hook([&](StepReport& r) {
    r.extra["heldout_pass_rate"] = solver.expected_pass_rate(grid);
    r.extra["solver_skill"] = solver.state().skill;
    r.extra["proposer_skill"] = proposer.state().skill;
  });

  SimulationResult result;
  orchestrator.run([&](const StepReport& r) {
    result.reports.push_back(r);
    if (observer) observer(r);
  });
  result.final_solver_skill = solver.state().skill;
  result.final_proposer_skill = proposer.state().skill;
  return result;
}

}  // namespace dualplay
