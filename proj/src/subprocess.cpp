#include "forge/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "forge/error.hpp"

namespace forge {

namespace {

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) throw HookError(std::string("pipe: ") + std::strerror(errno));
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (fd[0] >= 0) ::close(fd[0]);
    fd[0] = -1;
  }
  void close_write() {
    if (fd[1] >= 0) ::close(fd[1]);
    fd[1] = -1;
  }
};

}  // namespace

nlohmann::json run_json_subprocess(const std::vector<std::string>& argv, const nlohmann::json& request) {
  if (argv.empty()) throw HookError("subprocess hook: empty command");
  // A child that exits early must not kill us on the next write.
  static const bool sigpipe_ignored = (::signal(SIGPIPE, SIG_IGN), true);
  (void)sigpipe_ignored;
  const std::string payload = request.dump() + "\n";
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  Pipe in, out;
  const pid_t pid = ::fork();
  if (pid < 0) throw HookError(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(in.fd[0], STDIN_FILENO);
    ::dup2(out.fd[1], STDOUT_FILENO);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  in.close_read();
  out.close_write();

  // Interleave writing the request and draining stdout so neither side blocks.
  std::string response;
  std::size_t written = 0;
  char buf[4096];
  bool reading = true;
  while (reading) {
    pollfd fds[2];
    int nfds = 0;
    fds[nfds++] = {out.fd[0], POLLIN, 0};
    if (in.fd[1] >= 0) fds[nfds++] = {in.fd[1], POLLOUT, 0};
    if (::poll(fds, nfds_t(nfds), -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (nfds == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t n = ::write(in.fd[1], payload.data() + written, payload.size() - written);
      if (n > 0) written += std::size_t(n);
      if (n < 0 || written == payload.size()) in.close_write();
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      const ssize_t n = ::read(out.fd[0], buf, sizeof buf);
      if (n > 0) response.append(buf, std::size_t(n));
      else reading = false;
    }
  }
  in.close_write();
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw HookError("subprocess hook '" + argv[0] + "' failed with status " + std::to_string(status));
  }
  try {
    return nlohmann::json::parse(response);
  } catch (const nlohmann::json::parse_error&) {
    throw HookError("subprocess hook '" + argv[0] + "' wrote invalid JSON");
  }
}

namespace {

nlohmann::json request_json(const GenerationRequest& r) {
  return {{"source_ref", r.source_ref}, {"instruction", r.instruction}, {"attempt", r.attempt}, {"seed", r.seed}};
}

}  // namespace

GeneratorHook subprocess_generator(std::vector<std::string> argv) {
  return [argv = std::move(argv)](const GenerationRequest& r) {
    const auto resp = run_json_subprocess(argv, request_json(r));
    if (!resp.is_object() || !resp.contains("target_ref") || !resp["target_ref"].is_string()) {
      throw HookError("generator response needs a string target_ref");
    }
    return GeneratedCandidate{resp["target_ref"].get<std::string>()};
  };
}

CandidateValidator subprocess_validator(std::vector<std::string> argv) {
  return [argv = std::move(argv)](const GenerationRequest& r, const GeneratedCandidate& c) {
    auto req = request_json(r);
    req["target_ref"] = c.target_ref;
    const auto resp = run_json_subprocess(argv, req);
    if (!resp.is_object() || !resp.contains("pass") || !resp["pass"].is_boolean()) {
      throw HookError("validator response needs a boolean pass");
    }
    return ValidatorVerdict{resp["pass"].get<bool>(), resp.value("reason", std::string())};
  };
}

}  // namespace forge
