// Episodic goal navigation in a rectangular room with colored boxes: discrete
// left/right/forward actions, shaped rewards with an audited per-component
// breakdown, and observations from either a ground-truth projection oracle or
// a detector run on the rendered first-person view.
#pragma once

#include <deque>
#include <functional>

#include "edgenav/detector.hpp"
#include "edgenav/scenegen.hpp"

namespace edgenav {

enum NavAction { kTurnLeft = 0, kTurnRight = 1, kForward = 2 };
inline constexpr int kNumActions = 3;

struct NavConfig {
  double room_width = 10.0, room_depth = 10.0;
  double turn_angle = 15.0 * M_PI / 180.0;
  double stride = 0.25;
  double proximity_threshold = 0.6;
  double box_size = 0.8;
  double wall_margin = 0.2;
  int64_t episode_limit = 1024;
  int num_boxes = 3;  // scenario complexity: 1, 2 or 3 boxes, one is the goal
  bool terminate_on_collision = true;
  double camera_height = 0.6;
  double hfov_deg = 60.0;
  int64_t render_size = 64;  // detector-mode observation resolution
};

struct EnvBox {
  int class_id = 0;
  double x = 0, y = 0, size = 0.8;
};

struct EnvState {
  double agent_x = 0, agent_y = 0, heading = 0;
  std::vector<EnvBox> boxes;
  int goal_class = 0;
  int64_t step_count = 0;
  int last_action = -1;  // -1: none yet
  double prev_goal_distance = 0;
  bool goal_seen_before = false;
  bool done = false;
};

// Table-driven reward with every component logged; total() is always the
// exact float sum of the parts.
struct RewardBreakdown {
  double goal_reached = 0;      // +10.0
  double wrong_or_collision = 0;  // -2.0
  double step_penalty = 0;      // -0.01
  double opposite_turn = 0;     // -0.05
  double distance_change = 0;   // 0.5 * (d_prev - d_curr)
  double first_sight = 0;       // +0.1
  double exploration = 0;       // +0.01 forward / +0.005 turn, goal not in view

  double total() const {
    return goal_reached + wrong_or_collision + step_penalty + opposite_turn +
           distance_change + first_sight + exploration;
  }
};

struct StepFlags {
  bool reached_goal = false;
  bool wrong_goal_or_wall = false;
  bool forward_action = false;
  bool turn_action = false;
  bool opposite_turn = false;
  bool goal_in_view = false;   // after the action
  bool first_sight = false;    // goal entered view for the first time
  double d_prev = 0, d_curr = 0;
};

inline RewardBreakdown reward_fn(const StepFlags& f) {
  RewardBreakdown r;
  if (f.reached_goal) r.goal_reached = 10.0;
  if (f.wrong_goal_or_wall) r.wrong_or_collision = -2.0;
  r.step_penalty = -0.01;
  if (f.opposite_turn) r.opposite_turn = -0.05;
  r.distance_change = 0.5 * (f.d_prev - f.d_curr);
  if (f.first_sight) r.first_sight = 0.1;
  if (!f.goal_in_view) {
    if (f.forward_action) r.exploration = 0.01;
    else if (f.turn_action) r.exploration = 0.005;
  }
  return r;
}

struct Observation {
  std::vector<double> state_vector;  // [4n bbox corners][n one-hot goal][a one-hot last action]
};

// Optional detector in the observation path: takes the rendered first-person
// view, returns decoded detections.
using DetectorFn = std::function<std::vector<Detection>(const RgbImage&)>;

struct StepResult {
  double reward = 0;
  RewardBreakdown components;
  bool done = false;
  Observation obs;
};

class NavEnv {
 public:
  explicit NavEnv(NavConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.num_boxes < 1 || cfg_.num_boxes > kNumClasses)
      throw ConfigError("NavEnv: num_boxes must be within 1.." +
                        std::to_string(kNumClasses));
  }

  void set_detector(DetectorFn fn) { detector_ = std::move(fn); }
  const NavConfig& config() const { return cfg_; }
  const EnvState& state() const { return state_; }
  // direct state injection for audits and hand-constructed scenarios
  EnvState& mutable_state() { return state_; }

  // Fresh random layout; goal chosen uniformly among the placed boxes.
  Observation reset(uint64_t seed) {
    Rng rng(seed);
    state_ = EnvState{};
    // choose which classes appear
    std::array<int, kNumClasses> classes = {0, 1, 2};
    std::shuffle(classes.begin(), classes.end(), rng.engine());
    for (int i = 0; i < cfg_.num_boxes; ++i) {
      for (int attempt = 0; attempt < 1000; ++attempt) {
        EnvBox box;
        box.class_id = classes[i];
        box.size = cfg_.box_size;
        const double margin = box.size * 0.5 + 0.1;
        box.x = rng.uniform(margin, cfg_.room_width - margin);
        box.y = rng.uniform(margin, cfg_.room_depth - margin);
        bool ok = true;
        for (const auto& other : state_.boxes) {
          const double dx = box.x - other.x, dy = box.y - other.y;
          ok = ok && std::sqrt(dx * dx + dy * dy) >= cfg_.box_size;
        }
        if (!ok) continue;
        state_.boxes.push_back(box);
        break;
      }
    }
    if (static_cast<int>(state_.boxes.size()) != cfg_.num_boxes)
      throw ContractError("NavEnv: failed to place boxes without overlap");
    state_.goal_class =
        state_.boxes[rng.uniform_int(0, state_.boxes.size() - 1)].class_id;
    // agent spawn away from every box
    for (int attempt = 0; attempt < 1000; ++attempt) {
      state_.agent_x = rng.uniform(cfg_.wall_margin, cfg_.room_width - cfg_.wall_margin);
      state_.agent_y = rng.uniform(cfg_.wall_margin, cfg_.room_depth - cfg_.wall_margin);
      bool clear = true;
      for (const auto& b : state_.boxes) {
        const double dx = state_.agent_x - b.x, dy = state_.agent_y - b.y;
        clear = clear && std::sqrt(dx * dx + dy * dy) > cfg_.proximity_threshold + 0.4;
      }
      if (clear) break;
    }
    state_.heading = rng.uniform(0.0, 2.0 * M_PI);
    state_.prev_goal_distance = goal_distance();
    state_.goal_seen_before = goal_in_view();
    return observe();
  }

  StepResult step(int action) {
    if (state_.done) throw ContractError("NavEnv::step called on a finished episode");
    if (action < 0 || action >= kNumActions)
      throw ContractError("NavEnv::step: invalid action " + std::to_string(action));
    StepFlags flags;
    flags.d_prev = goal_distance();
    flags.forward_action = action == kForward;
    flags.turn_action = !flags.forward_action;
    flags.opposite_turn = (state_.last_action == kTurnLeft && action == kTurnRight) ||
                          (state_.last_action == kTurnRight && action == kTurnLeft);
    bool collided = false;
    if (action == kTurnLeft) {
      state_.heading += cfg_.turn_angle;
    } else if (action == kTurnRight) {
      state_.heading -= cfg_.turn_angle;
    } else {
      double nx = state_.agent_x + cfg_.stride * std::cos(state_.heading);
      double ny = state_.agent_y + cfg_.stride * std::sin(state_.heading);
      const double lo = cfg_.wall_margin;
      if (nx < lo || nx > cfg_.room_width - lo || ny < lo ||
          ny > cfg_.room_depth - lo) {
        collided = true;
        nx = std::clamp(nx, lo, cfg_.room_width - lo);
        ny = std::clamp(ny, lo, cfg_.room_depth - lo);
      }
      state_.agent_x = nx;
      state_.agent_y = ny;
    }
    state_.step_count += 1;
    state_.last_action = action;
    flags.d_curr = goal_distance();

    // terminal events: box contact first (goal precedence on a tie), then wall
    const EnvBox* contact = nearest_box_within(cfg_.proximity_threshold);
    if (contact != nullptr) {
      if (contact->class_id == state_.goal_class) flags.reached_goal = true;
      else flags.wrong_goal_or_wall = true;
      state_.done = true;
    } else if (collided) {
      flags.wrong_goal_or_wall = true;
      if (cfg_.terminate_on_collision) state_.done = true;
    }
    if (state_.step_count >= cfg_.episode_limit) state_.done = true;

    flags.goal_in_view = goal_in_view();
    if (flags.goal_in_view && !state_.goal_seen_before) {
      flags.first_sight = true;
      state_.goal_seen_before = true;
    }
    state_.prev_goal_distance = flags.d_curr;

    StepResult result;
    result.components = reward_fn(flags);
    result.reward = result.components.total();
    result.done = state_.done;
    result.obs = observe();
    last_flags_ = flags;
    return result;
  }

  // Euclidean proximity predicate against the goal box (strict inequality).
  bool success() const { return goal_distance() < cfg_.proximity_threshold; }
  bool reached_goal() const { return last_flags_.reached_goal; }

  double goal_distance() const {
    const EnvBox& g = goal_box();
    const double dx = state_.agent_x - g.x, dy = state_.agent_y - g.y;
    return std::sqrt(dx * dx + dy * dy);
  }

  CameraPose camera() const {
    return {state_.agent_x, state_.agent_y, cfg_.camera_height, state_.heading,
            cfg_.hfov_deg};
  }

  bool goal_in_view() const {
    return static_cast<bool>(camgeo::project_box(camera(), placement(goal_box())));
  }

  // 1x(5n+a) state vector: per-class bbox corners (zeros when not detected),
  // one-hot goal, one-hot last action (all zeros before the first action).
  Observation observe() const {
    Observation obs;
    obs.state_vector.assign(5 * kNumClasses + kNumActions, 0.0);
    if (detector_) {
      RgbImage view = render_first_person();
      for (const Detection& det : detector_(view)) {
        if (det.class_id < 0 || det.class_id >= kNumClasses) continue;
        double* slot = &obs.state_vector[4 * det.class_id];
        slot[0] = det.x1;
        slot[1] = det.y1;
        slot[2] = det.x2;
        slot[3] = det.y2;
      }
    } else {
      for (const auto& b : state_.boxes) {
        if (auto lb = camgeo::project_box(camera(), placement(b))) {
          double* slot = &obs.state_vector[4 * b.class_id];
          slot[0] = lb->x1;
          slot[1] = lb->y1;
          slot[2] = lb->x2;
          slot[3] = lb->y2;
        }
      }
    }
    obs.state_vector[4 * kNumClasses + state_.goal_class] = 1.0;
    if (state_.last_action >= 0)
      obs.state_vector[5 * kNumClasses + state_.last_action] = 1.0;
    return obs;
  }

  RgbImage render_first_person() const {
    RoomSpec room;
    room.width = cfg_.room_width;
    room.depth = cfg_.room_depth;
    room.seed = 7;  // fixed decor; episode randomness lives in the layout
    std::vector<BoxPlacement> placements;
    for (const auto& b : state_.boxes) placements.push_back(placement(b));
    return render_view(room, placements, camera(), cfg_.render_size);
  }

 private:
  const EnvBox& goal_box() const {
    for (const auto& b : state_.boxes)
      if (b.class_id == state_.goal_class) return b;
    throw ContractError("NavEnv: goal box missing");
  }

  BoxPlacement placement(const EnvBox& b) const {
    return {b.class_id, b.x, b.y, b.size};
  }

  const EnvBox* nearest_box_within(double threshold) const {
    const EnvBox* best = nullptr;
    double best_d = threshold;
    for (const auto& b : state_.boxes) {
      const double dx = state_.agent_x - b.x, dy = state_.agent_y - b.y;
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d < best_d ||
          (best && d == best_d && b.class_id == state_.goal_class)) {
        best = &b;
        best_d = d;
      }
    }
    return best;
  }

  NavConfig cfg_;
  EnvState state_;
  StepFlags last_flags_;
  DetectorFn detector_;
};

// JSON-lines episode trace: one object per step with the reward breakdown and
// the observed state vector.
inline void write_trace_line(std::ostream& out, int64_t step, int action,
                             const StepResult& res) {
  out << "{\"step\":" << step << ",\"action\":" << action << ",\"reward\":{"
      << "\"total\":" << fmt_g17(res.reward)
      << ",\"goal_reached\":" << fmt_g17(res.components.goal_reached)
      << ",\"wrong_or_collision\":" << fmt_g17(res.components.wrong_or_collision)
      << ",\"step_penalty\":" << fmt_g17(res.components.step_penalty)
      << ",\"opposite_turn\":" << fmt_g17(res.components.opposite_turn)
      << ",\"distance_change\":" << fmt_g17(res.components.distance_change)
      << ",\"first_sight\":" << fmt_g17(res.components.first_sight)
      << ",\"exploration\":" << fmt_g17(res.components.exploration) << "},\"state\":[";
  for (size_t i = 0; i < res.obs.state_vector.size(); ++i)
    out << (i ? "," : "") << fmt_g17(res.obs.state_vector[i]);
  out << "],\"done\":" << (res.done ? "true" : "false") << "}\n";
}

}  // namespace edgenav
