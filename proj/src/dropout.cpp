#include "flsim/dropout.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

namespace flsim {

namespace {

void check_cap(const DropoutSchedule& s) {
  for (int t = 0; t < s.rounds(); ++t) {
    const auto& st = s.participation[t];
    if (st.empty())
      throw std::invalid_argument("schedule: empty round " + std::to_string(t));
    const double ratio =
        static_cast<double>(s.n_clients - static_cast<int>(st.size())) /
        s.n_clients;
    if (ratio > s.alpha + 1e-12)
      throw std::invalid_argument("schedule: round " + std::to_string(t) +
                                  " violates the dropout cap");
  }
}

std::vector<int> complement(const std::vector<int>& dropped, int K) {
  std::vector<char> out(K, 1);
  for (int k : dropped) out[k] = 0;
  std::vector<int> s;
  s.reserve(K - dropped.size());
  for (int k = 0; k < K; ++k)
    if (out[k]) s.push_back(k);
  return s;
}

}  // namespace

DropoutSchedule generate_schedule(DropoutKind kind, int K, int T, double alpha,
                                  RngStream rng) {
  if (K < 1 || T < 1)
    throw std::invalid_argument("generate_schedule: K and T must be >= 1");
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw std::invalid_argument("generate_schedule: alpha must be in [0, 1)");

  const int n_drop = static_cast<int>(alpha * K);
  DropoutSchedule s;
  s.n_clients = K;
  s.alpha = alpha;
  s.kind = kind;
  s.participation.resize(T);

  switch (kind) {
    case DropoutKind::iid_random: {
      std::vector<int> ids(K);
      for (int t = 0; t < T; ++t) {
        std::iota(ids.begin(), ids.end(), 0);
        // partial Fisher-Yates: first n_drop entries are the dropped set
        for (int i = 0; i < n_drop; ++i) {
          const int j = i + static_cast<int>(rng.uniform_int(K - i));
          std::swap(ids[i], ids[j]);
        }
        std::vector<int> dropped(ids.begin(), ids.begin() + n_drop);
        s.participation[t] = complement(dropped, K);
      }
      break;
    }
    case DropoutKind::periodic: {
      // client k absent while (t mod K) lies in [k, k + n_drop)
      for (int t = 0; t < T; ++t) {
        std::vector<int> dropped;
        for (int j = 0; j < n_drop; ++j)
          dropped.push_back(((t % K) - j + K) % K);
        s.participation[t] = complement(dropped, K);
      }
      break;
    }
    case DropoutKind::adversarial_rotating: {
      // Dropped block of size n_drop whose start advances by n_drop each
      // round; after each full cycle the phase shifts by one so the block
      // visits all offsets and absences chain across the wrap.
      const int g = n_drop > 0 ? std::gcd(K, n_drop) : K;
      const int period = n_drop > 0 ? K / g : 1;
      for (int t = 0; t < T; ++t) {
        const int cycle = t / period, pos = t % period;
        const int start = n_drop > 0 ? (pos * n_drop + cycle) % K : 0;
        std::vector<int> dropped;
        for (int j = 0; j < n_drop; ++j) dropped.push_back((start + j) % K);
        s.participation[t] = complement(dropped, K);
      }
      break;
    }
    case DropoutKind::from_file:
      throw std::invalid_argument(
          "generate_schedule: from_file schedules come from load_schedule_json");
  }
  check_cap(s);
  return s;
}

CommonRoundsReport check_common_rounds(const DropoutSchedule& s, int warmup) {
  const int K = s.n_clients;
  const int T = s.rounds();
  CommonRoundsReport rep;
  if (K < 2) return rep;  // no pairs: the bound is vacuous

  Eigen::MatrixXi n = Eigen::MatrixXi::Zero(K, K);
  std::vector<std::vector<char>> zero_reported(K, std::vector<char>(K, 0));
  double beta = 1.0;
  const int start = std::min(warmup, T);

  for (int t = 0; t < T; ++t) {
    const auto& st = s.participation[t];
    for (std::size_t a = 0; a < st.size(); ++a)
      for (std::size_t b = a + 1; b < st.size(); ++b) {
        n(st[a], st[b]) += 1;
        n(st[b], st[a]) += 1;
      }
    const int rounds_done = t + 1;
    if (rounds_done < start) continue;
    for (int i = 0; i < K; ++i)
      for (int j = i + 1; j < K; ++j) {
        beta = std::min(beta, static_cast<double>(n(i, j)) / rounds_done);
        if (n(i, j) == 0 && !zero_reported[i][j]) {
          rep.violations.emplace_back(rounds_done, i, j);
          zero_reported[i][j] = 1;
        }
      }
  }
  rep.beta_hat = beta;

  double sum = 0.0;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) sum += static_cast<double>(n(i, j)) / T;
  rep.mean_rate = sum / (K * (K - 1) / 2.0);
  return rep;
}

std::vector<std::pair<int, int>> check_friend_presence(
    const DropoutSchedule& s, const std::vector<std::vector<int>>& friends) {
  std::vector<std::pair<int, int>> violations;
  for (int t = 0; t < s.rounds(); ++t) {
    const auto& st = s.participation[t];
    std::vector<char> present(s.n_clients, 0);
    for (int k : st) present[k] = 1;
    for (int k = 0; k < s.n_clients; ++k) {
      if (present[k]) continue;
      bool friend_present = false;
      for (int f : friends[k])
        if (present[f]) {
          friend_present = true;
          break;
        }
      if (!friend_present) violations.emplace_back(t, k);
    }
  }
  return violations;
}

DropoutSchedule load_schedule_json(const std::string& path, int K,
                                   double alpha) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (!j.is_array())
    throw std::invalid_argument(path + ": expected a JSON array of rounds");

  DropoutSchedule s;
  s.n_clients = K;
  s.alpha = alpha;
  s.kind = DropoutKind::from_file;
  for (const auto& round : j) {
    std::vector<int> st = round.get<std::vector<int>>();
    std::set<int> uniq(st.begin(), st.end());
    if (uniq.size() != st.size())
      throw std::invalid_argument(path + ": duplicate client id in a round");
    for (int k : st)
      if (k < 0 || k >= K)
        throw std::invalid_argument(path + ": client id out of range");
    s.participation.emplace_back(uniq.begin(), uniq.end());
  }
  check_cap(s);
  return s;
}

void save_schedule_json(const DropoutSchedule& s, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& st : s.participation) j.push_back(st);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << "\n";
}

}  // namespace flsim
