#include "pixphys/planner.hpp"

#include <httplib.h>

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <mutex>
#include <optional>
#include <string>

namespace pixphys {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kMaxReplyBytes = 1 << 20;

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

using DeadlinePoint = std::chrono::time_point<Clock, std::chrono::duration<double>>;

double seconds_left(DeadlinePoint deadline) {
  // The explicit cast matters: the raw difference is a nanosecond-ratio
  // duration, whose count() is 1e9 too large to pass to poll().
  return std::chrono::duration_cast<std::chrono::duration<double>>(deadline - Clock::now())
      .count();
}

int poll_millis(double seconds) {
  return static_cast<int>(std::min(std::ceil(seconds * 1000.0), 3.6e6));
}

/// POSTs `body` to an http:// URL; returns the response body on HTTP 200.
std::optional<std::string> http_exchange(const std::string& endpoint, const std::string& body,
                                         double timeout_seconds, std::string& error) {
  if (starts_with(endpoint, "https://")) {
    error = "https advisor endpoints are not supported in this build; use http or a subprocess";
    return std::nullopt;
  }
  const std::string rest = endpoint.substr(std::string("http://").size());
  const auto slash = rest.find('/');
  const std::string hostport = rest.substr(0, slash);
  const std::string path = slash == std::string::npos ? "/" : rest.substr(slash);
  const auto colon = hostport.rfind(':');
  const std::string host = colon == std::string::npos ? hostport : hostport.substr(0, colon);
  int port = 80;
  if (colon != std::string::npos) {
    try {
      port = std::stoi(hostport.substr(colon + 1));
    } catch (const std::exception&) {
      port = -1;
    }
  }
  if (host.empty() || port <= 0 || port > 65535) {
    error = "advisor URL '" + endpoint + "' has no valid host:port";
    return std::nullopt;
  }

  httplib::Client client(host, port);
  const auto timeout = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::duration<double>(timeout_seconds));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  auto res = client.Post(path, body, "application/json");
  if (!res) {
    error = "advisor POST to " + endpoint + " failed: " + httplib::to_string(res.error());
    return std::nullopt;
  }
  if (res->status != 200) {
    error = "advisor returned HTTP " + std::to_string(res->status);
    return std::nullopt;
  }
  return res->body;
}

/// Runs `command` under /bin/sh, feeding `input` on stdin and collecting
/// stdout until EOF or the deadline; a child past the deadline is killed.
std::optional<std::string> subprocess_exchange(const std::string& command,
                                               const std::string& input, double timeout_seconds,
                                               std::string& error) {
  // The child may exit without draining stdin; that must surface as a bad
  // reply, not kill this process with SIGPIPE.
  static std::once_flag ignore_sigpipe;
  std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });

  int to_child[2];
  int from_child[2];
  if (pipe(to_child) != 0) {
    error = std::string("pipe() failed: ") + std::strerror(errno);
    return std::nullopt;
  }
  if (pipe(from_child) != 0) {
    error = std::string("pipe() failed: ") + std::strerror(errno);
    close(to_child[0]);
    close(to_child[1]);
    return std::nullopt;
  }

  const pid_t pid = fork();
  if (pid < 0) {
    error = std::string("fork() failed: ") + std::strerror(errno);
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
    return std::nullopt;
  }
  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);

  const DeadlinePoint deadline = Clock::now() + std::chrono::duration<double>(timeout_seconds);

  std::size_t written = 0;
  while (written < input.size()) {
    const ssize_t n = write(to_child[1], input.data() + written, input.size() - written);
    if (n > 0) {
      written += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    break;  // EPIPE and friends: the child stopped reading; its reply decides.
  }
  close(to_child[1]);

  std::string output;
  bool timed_out = false;
  char buf[4096];
  for (;;) {
    const double left = seconds_left(deadline);
    if (left <= 0.0) {
      timed_out = true;
      break;
    }
    pollfd p{from_child[0], POLLIN, 0};
    const int rc = poll(&p, 1, poll_millis(left));
    if (rc == 0) {
      timed_out = true;
      break;
    }
    if (rc < 0) {
      if (errno == EINTR) continue;
      error = std::string("poll() failed: ") + std::strerror(errno);
      break;
    }
    const ssize_t n = read(from_child[0], buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      error = std::string("read() failed: ") + std::strerror(errno);
      break;
    }
    if (n == 0) break;  // EOF
    output.append(buf, static_cast<std::size_t>(n));
    if (output.size() > kMaxReplyBytes) {
      error = "advisor reply exceeded 1 MiB";
      timed_out = true;  // force the kill path below
      break;
    }
  }
  close(from_child[0]);

  if (timed_out) {
    kill(pid, SIGKILL);
    waitpid(pid, nullptr, 0);
    if (error.empty())
      error = "advisor timed out after " + std::to_string(timeout_seconds) + " s";
    return std::nullopt;
  }

  // stdout is closed; give the child the remaining budget to exit cleanly.
  int status = 0;
  for (;;) {
    const pid_t done = waitpid(pid, &status, WNOHANG);
    if (done == pid) break;
    if (done < 0) {
      error = std::string("waitpid() failed: ") + std::strerror(errno);
      return std::nullopt;
    }
    if (seconds_left(deadline) <= 0.0) {
      kill(pid, SIGKILL);
      waitpid(pid, nullptr, 0);
      if (error.empty()) error = "advisor did not exit within the timeout";
      return std::nullopt;
    }
    usleep(2000);
  }
  if (!error.empty()) return std::nullopt;
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    error = WIFEXITED(status)
                ? "advisor exited with status " + std::to_string(WEXITSTATUS(status))
                : "advisor was terminated by a signal";
    return std::nullopt;
  }
  return output;
}

}  // namespace

PlanInstruction advise_external(const nlohmann::json& request, const std::string& endpoint,
                                double timeout_seconds, const PlanInstruction& fallback,
                                AdvisorExchange* exchange) {
  AdvisorExchange ex;
  ex.request = request.dump();

  std::string error;
  std::optional<std::string> reply;
  if (starts_with(endpoint, "http://") || starts_with(endpoint, "https://"))
    reply = http_exchange(endpoint, ex.request, timeout_seconds, error);
  else
    reply = subprocess_exchange(endpoint, ex.request, timeout_seconds, error);

  PlanInstruction result = fallback;
  if (!reply) {
    ex.note = "fallback: " + error;
  } else {
    ex.response = *reply;
    try {
      const nlohmann::json parsed = nlohmann::json::parse(*reply);
      PlanInstruction instr = instruction_from_json(parsed);
      if (request.contains("allowed_actions")) {
        const auto& allowed = request["allowed_actions"];
        const std::string name = plan_action_name(instr.action);
        if (std::none_of(allowed.begin(), allowed.end(),
                         [&name](const nlohmann::json& a) { return a == name; }))
          throw std::invalid_argument("action '" + name + "' is not in allowed_actions");
      }
      ex.used_advisor = true;
      ex.note = "ok";
      result = std::move(instr);
    } catch (const std::exception& e) {
      ex.note = std::string("fallback: invalid advisor reply: ") + e.what();
    }
  }
  if (exchange) *exchange = std::move(ex);
  return result;
}

}  // namespace pixphys
