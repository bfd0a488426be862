#pragma once

#include "statviz/http.hpp"

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace statviz::cli {

// Stands in for the real process environment and network in tests.
struct Environment {
    std::map<std::string, std::string> vars;
    std::shared_ptr<http::Transport> transport;  // NetworkTransport when null

    static Environment from_process();
    std::optional<std::string> get(const std::string& name) const;
};

// Runs one command line (without argv[0]). Returns the process exit code:
// 0 success, 1 usage error, 2 internal error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Environment& env);

} // namespace statviz::cli
