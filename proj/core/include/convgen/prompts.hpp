#pragma once
// Prompt templates, keyed by pipeline stage. Template text is
// configuration: the built-in set matches the files shipped under
// prompts/, and a directory of edited copies can be loaded over it.
// Placeholders use {{name}}.

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace convgen::prompts {

class PromptLibrary {
public:
    // The compiled-in default templates.
    static const PromptLibrary& builtin();

    // Builtin templates with any stage*.txt / salvage.txt found in dir
    // loaded over them. Throws IoError when dir does not exist.
    static PromptLibrary from_dir(const std::string& dir);

    const std::string& raw(const std::string& key) const;

    std::string render(const std::string& key,
                       const std::vector<std::pair<std::string, std::string>>& vars) const;

    std::vector<std::string> keys() const;

private:
    std::map<std::string, std::string> templates_;
};

}  // namespace convgen::prompts
