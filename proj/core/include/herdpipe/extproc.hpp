#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace herdpipe {

struct CommandResult {
    int exit_code = -1;
    bool timed_out = false;

    bool ok() const { return !timed_out && exit_code == 0; }
};

/// Run a shell command (/bin/sh -c). timeout_ms <= 0 means no timeout; on
/// timeout the whole process group is killed. Throws IoError only when the
/// process cannot be spawned at all.
CommandResult run_command(const std::string& shell_command, std::int64_t timeout_ms = 0);

/// Substitute {name} placeholders. Unknown placeholders are an error so that
/// template typos surface immediately; literal braces are not supported.
std::string substitute_template(std::string_view tmpl,
                                const std::map<std::string, std::string>& vars);

}  // namespace herdpipe
