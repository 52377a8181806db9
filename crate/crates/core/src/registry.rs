//! Digital-twin registry: the descriptive catalog of production modules,
//! their skills, components and functionality endpoints.
//!
//! The registry is built once from a catalog file and is immutable afterwards.
//! It also renders its content into the natural-language context blocks used
//! by the manager and operator prompts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::features::FeatureKind;

/// Bundled reference catalog.
pub const BUNDLED_CATALOG: &str = include_str!("../data/catalog.toml");

static SKILL_CODE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Z][0-9]+$").unwrap());

/// Returns true when `code` has the shape of a skill code (one capital letter
/// followed by digits).
pub fn is_skill_code(code: &str) -> bool {
    SKILL_CODE.is_match(code)
}

/// Process rules (1)-(9) of the manager context. They are the grammar the
/// plan validator enforces, so they live next to the code rather than in the
/// catalog.
pub const PROCESS_RULES: [&str; 9] = [
    "A production process consists of one or more process steps.",
    "There are two types of process steps, one type is transportation process step, another type is production process step.",
    "If the next production process is executed in a different production module, transportation process between two production processes is necessary.",
    "The transportation step can be executed with a transport robot.",
    "Transportation step is not considered as production process step.",
    "A production process always begins with a skill of the storage module and ends with a skill of the storage module.",
    "This production system that you manage consists of several production modules. Each of these production modules has one or more skills to execute a production process step.",
    "Each process step can be executed with one skill of a module.",
    "The production process should only contain the necessary steps that are necessary to satisfy a task specified in the input.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    Storage,
    Inspection,
    Machining,
    Painting,
    Laser,
    Transport,
}

/// What a skill does to the plant when it runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SkillEffect {
    /// Take the workpiece out of storage inventory onto the hand-off point.
    Retrieve,
    /// Put the workpiece from the hand-off point back into inventory.
    Store,
    Transport,
    Leave,
    AddFeature(FeatureKind),
}

impl FromStr for SkillEffect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "retrieve" => SkillEffect::Retrieve,
            "store" => SkillEffect::Store,
            "transport" => SkillEffect::Transport,
            "leave" => SkillEffect::Leave,
            other => SkillEffect::AddFeature(
                other
                    .parse()
                    .map_err(|_| format!("unknown skill effect {other:?}"))?,
            ),
        })
    }
}

impl SkillEffect {
    pub fn is_transport(self) -> bool {
        matches!(self, SkillEffect::Transport | SkillEffect::Leave)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SkillEffect::Retrieve => "retrieve",
            SkillEffect::Store => "store",
            SkillEffect::Transport => "transport",
            SkillEffect::Leave => "leave",
            SkillEffect::AddFeature(kind) => kind.as_str(),
        }
    }
}

impl Serialize for SkillEffect {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skill {
    pub code: String,
    pub description: String,
    pub effect: SkillEffect,
    pub host_module: String,
    pub endpoint: Url,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Functionality {
    pub name: String,
    pub description: String,
    pub url: Url,
    pub parameters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentTwin {
    pub id: String,
    pub name: Option<String>,
    pub device: Option<String>,
    pub functionalities: Vec<Functionality>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModuleTwin {
    pub id: String,
    pub name: String,
    pub aliases: Vec<String>,
    pub kind: ModuleKind,
    /// Noun used when listing skills in the manager context ("skills" unless
    /// the catalog says otherwise).
    pub skill_noun: Option<String>,
    pub skills: Vec<Skill>,
    pub components: Vec<ComponentTwin>,
    pub info_submodels: BTreeMap<String, String>,
}

impl ModuleTwin {
    pub fn functionalities(&self) -> impl Iterator<Item = &Functionality> {
        self.components.iter().flat_map(|c| c.functionalities.iter())
    }

    /// "An inspection module", "A CNC machine module".
    pub fn titled_name(&self) -> String {
        let article = match self.name.chars().next() {
            Some(c) if "aeiouAEIOU".contains(c) => "An",
            _ => "A",
        };
        format!("{article} {}", self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkedExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("no modules")]
    NoModules,
    #[error("duplicate module id {0}")]
    DuplicateModule(String),
    #[error("duplicate skill code {0}")]
    DuplicateSkill(String),
    #[error("invalid catalog entry {entry}: {reason}")]
    InvalidEntry { entry: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LookupError {
    #[error("unknown module {0}")]
    UnknownModule(String),
    #[error("module {0} has no functionalities")]
    NoFunctionalities(String),
}

// ---------------------------------------------------------------------------
// Catalog file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    base_url: String,
    #[serde(default)]
    modules: Vec<ModuleEntry>,
    #[serde(default)]
    manager_examples: Vec<WorkedExample>,
    #[serde(default)]
    operator_examples: Vec<OperatorExampleEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModuleEntry {
    id: String,
    name: String,
    #[serde(default)]
    aliases: Vec<String>,
    kind: ModuleKind,
    #[serde(default)]
    skill_noun: Option<String>,
    #[serde(default)]
    skills: Vec<SkillEntry>,
    #[serde(default)]
    components: Vec<ComponentEntry>,
    #[serde(default)]
    info_submodels: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkillEntry {
    code: String,
    description: String,
    effect: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentEntry {
    id: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    device: Option<String>,
    #[serde(default)]
    functionalities: Vec<FunctionalityEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionalityEntry {
    name: String,
    description: String,
    url: String,
    #[serde(default)]
    parameters: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorExampleEntry {
    module: String,
    input: String,
    output: String,
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Registry {
    base_url: Url,
    modules: Vec<ModuleTwin>,
    skill_index: HashMap<String, (usize, usize)>,
    manager_examples: Vec<WorkedExample>,
    operator_examples: Vec<(String, WorkedExample)>,
}

fn invalid(entry: impl Into<String>, reason: impl Into<String>) -> CatalogError {
    CatalogError::InvalidEntry {
        entry: entry.into(),
        reason: reason.into(),
    }
}

fn resolve_url(base: &Url, raw: &str, entry: &str) -> Result<Url, CatalogError> {
    let url = match Url::parse(raw) {
        Ok(url) => url,
        Err(url::ParseError::RelativeUrlWithoutBase) => base
            .join(raw)
            .map_err(|e| invalid(entry, format!("bad url {raw:?}: {e}")))?,
        Err(e) => return Err(invalid(entry, format!("bad url {raw:?}: {e}"))),
    };
    if url.cannot_be_a_base() || url.host().is_none() {
        return Err(invalid(entry, format!("url {raw:?} is not an absolute http url")));
    }
    Ok(url)
}

fn skill_endpoint(base: &Url, module_id: &str, code: &str) -> Url {
    // module ids and codes are validated to be url-safe before this is called
    base.join(&format!("/{module_id}/skills/{code}"))
        .expect("validated module id and code form a valid path")
}

/// Swaps scheme, host and port of `url` for those of `base`.
fn with_origin(url: &Url, base: &Url) -> Url {
    let mut out = base.clone();
    out.set_path(url.path());
    out.set_query(url.query());
    out
}

/// Maps the singular `/functionality/` spelling onto the registered
/// `/functionalities/` form. Both spellings name the same endpoint.
pub fn canonical_functionality_url(url: &str) -> String {
    url.replacen("/functionality/", "/functionalities/", 1)
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Registry {
    /// Loads and validates a catalog file.
    pub fn load_catalog(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The bundled reference catalog.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_CATALOG).expect("bundled catalog is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile = toml::from_str(text)?;
        Self::from_file(file)
    }

    fn from_file(file: CatalogFile) -> Result<Self, CatalogError> {
        let base_url = Url::parse(&file.base_url)
            .map_err(|e| invalid("base_url", format!("{e}")))?;
        if base_url.host().is_none() {
            return Err(invalid("base_url", "must be an absolute http url"));
        }
        if file.modules.is_empty() {
            return Err(CatalogError::NoModules);
        }

        let mut module_ids = HashSet::new();
        let mut skill_index = HashMap::new();
        let mut modules = Vec::with_capacity(file.modules.len());

        for (mi, entry) in file.modules.into_iter().enumerate() {
            if !is_identifier(&entry.id) {
                return Err(invalid(
                    format!("module #{}", mi + 1),
                    format!("id {:?} must be a non-empty identifier", entry.id),
                ));
            }
            if !module_ids.insert(entry.id.clone()) {
                return Err(CatalogError::DuplicateModule(entry.id));
            }
            if entry.name.trim().is_empty() {
                return Err(invalid(format!("module {}", entry.id), "empty name"));
            }
            if entry.skills.is_empty() {
                return Err(invalid(format!("module {}", entry.id), "no skills"));
            }

            let mut skills = Vec::with_capacity(entry.skills.len());
            for (si, s) in entry.skills.into_iter().enumerate() {
                let label = format!("skill {} of module {}", s.code, entry.id);
                if !is_skill_code(&s.code) {
                    return Err(invalid(label, "code must be a letter followed by digits"));
                }
                if s.description.trim().is_empty() {
                    return Err(invalid(label, "empty description"));
                }
                let effect: SkillEffect = s.effect.parse().map_err(|e: String| invalid(&label, e))?;
                if skill_index.insert(s.code.clone(), (mi, si)).is_some() {
                    return Err(CatalogError::DuplicateSkill(s.code));
                }
                skills.push(Skill {
                    endpoint: skill_endpoint(&base_url, &entry.id, &s.code),
                    code: s.code,
                    description: s.description,
                    effect,
                    host_module: entry.id.clone(),
                });
            }

            let mut components = Vec::with_capacity(entry.components.len());
            for c in entry.components {
                let mut names = HashSet::new();
                let mut functionalities = Vec::with_capacity(c.functionalities.len());
                for f in c.functionalities {
                    let label = format!("functionality {:?} of component {}", f.name, c.id);
                    if f.name.trim().is_empty() {
                        return Err(invalid(label, "empty name"));
                    }
                    if !names.insert(f.name.clone()) {
                        return Err(invalid(label, "duplicate functionality name"));
                    }
                    let url = resolve_url(&base_url, &f.url, &label)?;
                    functionalities.push(Functionality {
                        name: f.name,
                        description: f.description,
                        url,
                        parameters: f.parameters,
                    });
                }
                components.push(ComponentTwin {
                    id: c.id,
                    name: c.name,
                    device: c.device,
                    functionalities,
                });
            }

            modules.push(ModuleTwin {
                id: entry.id,
                name: entry.name,
                aliases: entry.aliases,
                kind: entry.kind,
                skill_noun: entry.skill_noun,
                skills,
                components,
                info_submodels: entry.info_submodels,
            });
        }

        let mut operator_examples = Vec::new();
        for ex in file.operator_examples {
            if !module_ids.contains(&ex.module) {
                return Err(invalid(
                    "operator example",
                    format!("unknown module {:?}", ex.module),
                ));
            }
            operator_examples.push((
                ex.module,
                WorkedExample {
                    input: ex.input,
                    output: ex.output,
                },
            ));
        }

        Ok(Self {
            base_url,
            modules,
            skill_index,
            manager_examples: file.manager_examples,
            operator_examples,
        })
    }

    /// Returns a copy whose endpoint URLs all point at `base`.
    pub fn rebased(&self, base: &Url) -> Self {
        let mut out = self.clone();
        out.base_url = base.clone();
        for module in &mut out.modules {
            for skill in &mut module.skills {
                skill.endpoint = with_origin(&skill.endpoint, base);
            }
            for component in &mut module.components {
                for f in &mut component.functionalities {
                    f.url = with_origin(&f.url, base);
                }
            }
        }
        out
    }

    pub fn base_url(&self) -> &Url {
        &self.base_url
    }

    /// Base URL without a trailing slash, the form substituted for
    /// `{base_url}` in worked examples.
    pub fn base_url_str(&self) -> &str {
        self.base_url.as_str().trim_end_matches('/')
    }

    pub fn plant_state_url(&self) -> Url {
        self.base_url.join("/plant/state").expect("static path")
    }

    pub fn modules(&self) -> &[ModuleTwin] {
        &self.modules
    }

    pub fn module(&self, id: &str) -> Option<&ModuleTwin> {
        self.modules.iter().find(|m| m.id == id)
    }

    /// All skills in catalog order.
    pub fn skills(&self) -> impl Iterator<Item = &Skill> {
        self.modules.iter().flat_map(|m| m.skills.iter())
    }

    pub fn skill(&self, code: &str) -> Option<&Skill> {
        self.skill_index
            .get(code)
            .map(|&(mi, si)| &self.modules[mi].skills[si])
    }

    pub fn host_of(&self, code: &str) -> Option<&ModuleTwin> {
        self.skill_index.get(code).map(|&(mi, _)| &self.modules[mi])
    }

    pub fn storage_module(&self) -> Option<&ModuleTwin> {
        self.modules.iter().find(|m| m.kind == ModuleKind::Storage)
    }

    pub fn transport_module(&self) -> Option<&ModuleTwin> {
        self.modules.iter().find(|m| m.kind == ModuleKind::Transport)
    }

    /// Resolves a module by id, display name or alias, case-insensitively.
    /// A trailing " module" on the query is optional.
    pub fn module_by_name(&self, query: &str) -> Option<&ModuleTwin> {
        let q = query.trim().trim_end_matches('.').to_lowercase();
        let stripped = q.strip_suffix(" module").unwrap_or(&q).to_string();
        self.modules.iter().find(|m| {
            let mut names = std::iter::once(m.id.to_lowercase())
                .chain(std::iter::once(m.name.to_lowercase()))
                .chain(m.aliases.iter().map(|a| a.to_lowercase()));
            names.any(|n| n == q || n.strip_suffix(" module").unwrap_or(&n) == stripped)
        })
    }

    /// Finds the station (any non-transport module) whose name or alias occurs
    /// in `text`, preferring the longest match and, among equal lengths, the
    /// earliest occurrence.
    pub fn find_station_mention(&self, text: &str) -> Option<&ModuleTwin> {
        let lower = text.to_lowercase();
        let mut best: Option<(usize, usize, &ModuleTwin)> = None;
        for m in self.modules.iter().filter(|m| m.kind != ModuleKind::Transport) {
            let names = std::iter::once(&m.name).chain(m.aliases.iter());
            for name in names {
                if let Some(pos) = lower.find(&name.to_lowercase()) {
                    let len = name.len();
                    let better = match best {
                        None => true,
                        Some((bl, bp, _)) => len > bl || (len == bl && pos < bp),
                    };
                    if better {
                        best = Some((len, pos, m));
                    }
                }
            }
        }
        best.map(|(_, _, m)| m)
    }

    /// Looks up a functionality by URL, accepting either path spelling.
    pub fn functionality_by_url(&self, url: &str) -> Option<(&ModuleTwin, &Functionality)> {
        let wanted = canonical_functionality_url(url);
        self.modules.iter().find_map(|m| {
            m.functionalities()
                .find(|f| canonical_functionality_url(f.url.as_str()) == wanted)
                .map(|f| (m, f))
        })
    }

    pub fn manager_examples(&self) -> Vec<WorkedExample> {
        self.manager_examples
            .iter()
            .map(|ex| self.substitute_base(ex))
            .collect()
    }

    pub fn operator_examples(&self, module_id: &str) -> Vec<WorkedExample> {
        self.operator_examples
            .iter()
            .filter(|(m, _)| m == module_id)
            .map(|(_, ex)| self.substitute_base(ex))
            .collect()
    }

    fn substitute_base(&self, ex: &WorkedExample) -> WorkedExample {
        WorkedExample {
            input: ex.input.replace("{base_url}", self.base_url_str()),
            output: ex.output.replace("{base_url}", self.base_url_str()),
        }
    }

    /// Renders the manager-agent context: process rules (1)-(9) followed by
    /// one numbered entry per module in catalog order.
    pub fn render_manager_context(&self) -> String {
        let mut out = String::new();
        for (i, rule) in PROCESS_RULES.iter().enumerate() {
            let _ = writeln!(out, "({}) {}", i + 1, rule);
        }
        out.push_str("The production modules are described as following:\n");
        for (i, m) in self.modules.iter().enumerate() {
            let skills = m
                .skills
                .iter()
                .map(|s| format!("({}) {}", s.code, s.description))
                .collect::<Vec<_>>()
                .join(", ");
            let noun = m.skill_noun.as_deref().unwrap_or("skills");
            let _ = writeln!(
                out,
                "({}) {}. It has the following {noun}: {skills}.",
                PROCESS_RULES.len() + i + 1,
                m.titled_name()
            );
        }
        out.truncate(out.trim_end().len());
        out
    }

    /// Renders the operator-agent context for one module: the plant layout,
    /// the module's skills and its numbered functionalities with URLs.
    pub fn render_operator_context(&self, module_id: &str) -> Result<String, LookupError> {
        let module = self
            .module(module_id)
            .ok_or_else(|| LookupError::UnknownModule(module_id.to_string()))?;
        if module.functionalities().next().is_none() {
            return Err(LookupError::NoFunctionalities(module_id.to_string()));
        }

        let stations: Vec<&ModuleTwin> = self
            .modules
            .iter()
            .filter(|m| m.kind != ModuleKind::Transport)
            .collect();
        let mut out = String::new();
        let _ = write!(
            out,
            "There are several production modules in this production system, and they are {}.",
            join_and(stations.iter().map(|m| m.name.clone()))
        );
        if module.kind == ModuleKind::Transport {
            let _ = write!(
                out,
                " The {} only transports workpiece between two of the following modules: {}.",
                module.name,
                join_and(stations.iter().map(|m| format!("the {}", m.name)))
            );
        }
        out.push('\n');

        let skills = module
            .skills
            .iter()
            .map(|s| format!("({}) {}", s.code, s.description))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = write!(
            out,
            "The {} can perform the following skill(s): {skills}.",
            module.name
        );
        for component in module.components.iter().filter(|c| !c.functionalities.is_empty()) {
            let device = component.device.as_deref().unwrap_or(&module.name);
            if let Some(name) = &component.name {
                let _ = write!(
                    out,
                    " A component named \"{name}\" is a logical component, and it is identified as \"{}\". It can control the actions of the {}.",
                    component.id, module.name
                );
            }
            let _ = writeln!(
                out,
                " This component \"{}\" can execute the following functionalities of {device}:",
                component.id
            );
            for (i, f) in component.functionalities.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "({}) Functionality \"{}\" will {}. This functionality can be called using the URL \"{}\".",
                    i + 1,
                    f.name,
                    f.description,
                    f.url
                );
            }
        }
        out.truncate(out.trim_end().len());
        Ok(out)
    }
}

/// "a, b and c"
fn join_and(items: impl Iterator<Item = String>) -> String {
    let items: Vec<String> = items.collect();
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        n => format!("{} and {}", items[..n - 1].join(", "), items[n - 1]),
    }
}
