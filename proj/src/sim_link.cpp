#include "flightfix/errors.hpp"
#include "flightfix/simdrone.hpp"

namespace flightfix {

SimMission::SimMission(const ParamRegistry& registry, SimConfig config, ParamSet params, MissionPlan plan)
    : registry_(registry),
      sim_(registry, std::move(config), params, std::move(plan)),
      live_(merge(registry.defaults(), params)) {}

std::optional<TelemetryEvent> SimMission::next_event() {
  if (stopped_) return std::nullopt;
  if (queue_.empty()) {
    if (!started_) {
      started_ = true;
      for (auto& e : sim_.initial_events()) queue_.push_back(std::move(e));
    } else {
      for (auto& e : sim_.step()) queue_.push_back(std::move(e));
    }
  }
  if (queue_.empty()) return std::nullopt;
  TelemetryEvent ev = std::move(queue_.front());
  queue_.pop_front();
  if (std::holds_alternative<Landed>(ev) || std::holds_alternative<MissionTimeout>(ev)) consumer_ended_ = true;
  return ev;
}

UploadAck SimMission::upload_params(const ParamSet& fix) {
  if (ended()) throw StaleHandle("mission already ended");
  require_valid(registry_, fix);
  live_ = merge(live_, fix);
  sim_.apply_params(live_);
  return UploadAck{sim_.state().t};
}

FinalStatus SimMission::stop() {
  if (final_) return *final_;
  stopped_ = true;
  queue_.clear();
  const auto& s = sim_.state();
  if (s.landed) final_ = FinalStatus::landed();
  else if (s.crashed) final_ = FinalStatus::crashed();
  else if (s.timed_out) final_ = FinalStatus::aborted("timeout");
  else final_ = FinalStatus::aborted("stopped");
  return *final_;
}

bool SimMission::ended() const { return stopped_ || consumer_ended_ || sim_.finished(); }

SimLink::SimLink(const ParamRegistry& registry, SimConfig config) : registry_(registry), config_(std::move(config)) {
  config_.check(registry_);
}

std::unique_ptr<SimMission> SimLink::start_sim(const ParamSet& params, const MissionPlan& plan) {
  require_valid(registry_, params);
  plan.check();
  return std::make_unique<SimMission>(registry_, config_, params, plan);
}

std::unique_ptr<MissionHandle> SimLink::start_mission(const ParamSet& params, const MissionPlan& plan) {
  return start_sim(params, plan);
}

}  // namespace flightfix
