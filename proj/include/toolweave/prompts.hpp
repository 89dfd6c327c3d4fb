#pragma once

#include <map>
#include <string>
#include <vector>

namespace toolweave {

// Versioned text assets for every LLM role. Built-in defaults can be
// overridden per-template by files named "<template>.txt" in a directory.
class PromptLibrary {
public:
    static PromptLibrary builtin();
    static PromptLibrary load_dir(const std::string& dir);

    const std::string& text(const std::string& name) const;
    bool has(const std::string& name) const;

    // Replaces {placeholder} occurrences; unknown placeholders are an error,
    // unreplaced ones are left intact only if not supplied.
    std::string render(const std::string& name,
                       const std::map<std::string, std::string>& values) const;

    // template name -> sha256 prefix of its text; recorded in run manifests.
    std::map<std::string, std::string> versions() const;

private:
    std::map<std::string, std::string> templates_;
};

}  // namespace toolweave
