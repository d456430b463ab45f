#include "herdpipe/extproc.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <thread>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "herdpipe/common.hpp"

namespace herdpipe {

CommandResult run_command(const std::string& shell_command, std::int64_t timeout_ms) {
    const pid_t pid = ::fork();
    if (pid < 0) {
        throw IoError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        // Own process group so a timeout can kill the command and anything
        // it spawned.
        ::setpgid(0, 0);
        ::execl("/bin/sh", "sh", "-c", shell_command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    CommandResult result;
    int status = 0;
    for (;;) {
        const pid_t r = ::waitpid(pid, &status, timeout_ms > 0 ? WNOHANG : 0);
        if (r == pid) break;
        if (r < 0) {
            if (errno == EINTR) continue;
            throw IoError(std::string("waitpid failed: ") + std::strerror(errno));
        }
        if (timeout_ms > 0 && std::chrono::steady_clock::now() >= deadline) {
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            result.timed_out = true;
            result.exit_code = -1;
            return result;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }

    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    return result;
}

std::string substitute_template(std::string_view tmpl,
                                const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const std::size_t open = tmpl.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        out.append(tmpl.substr(pos, open - pos));
        const std::size_t close = tmpl.find('}', open + 1);
        if (close == std::string_view::npos) {
            throw ValidationError("command template: unterminated '{' at position " +
                                  std::to_string(open));
        }
        const std::string name(tmpl.substr(open + 1, close - open - 1));
        auto it = vars.find(name);
        if (it == vars.end()) {
            throw ValidationError("command template: unknown placeholder '{" + name + "}'");
        }
        out.append(it->second);
        pos = close + 1;
    }
    return out;
}

}  // namespace herdpipe
