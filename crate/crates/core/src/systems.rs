//! System configurations (JSON) and the builtin registry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Alphabet, LabelId, TilingOracle, Window};
use crate::sturmian::build_sturmian_oracle;
use crate::substitution::{build_substitution_oracle, BlockRule, SubstitutionRule, WordRule};

pub const BUILTINS: [&str; 4] = ["fibonacci", "thue_morse", "period_doubling", "chair2d"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageSpec {
    /// One-dimensional image written as a string of single-character names.
    Word(String),
    /// Label names, row-major with axis 0 slowest.
    Cells(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    Substitution {
        alphabet: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dimension: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expansion: Option<usize>,
        images: BTreeMap<String, ImageSpec>,
        window: Vec<[i64; 2]>,
    },
    Sturmian {
        cf_terms: Vec<u64>,
        window: Vec<[i64; 2]>,
    },
    Builtin {
        name: String,
        window: Vec<[i64; 2]>,
    },
}

impl SystemConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn builtin(name: &str, window: &Window) -> Self {
        SystemConfig::Builtin {
            name: name.to_string(),
            window: window.bounds(),
        }
    }

    pub fn sturmian(cf_terms: Vec<u64>, window: &Window) -> Self {
        SystemConfig::Sturmian {
            cf_terms,
            window: window.bounds(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SystemConfig::Substitution { .. } => "substitution",
            SystemConfig::Sturmian { .. } => "sturmian",
            SystemConfig::Builtin { .. } => "builtin",
        }
    }

    pub fn window(&self) -> Result<Window> {
        let w = match self {
            SystemConfig::Substitution { window, .. }
            | SystemConfig::Sturmian { window, .. }
            | SystemConfig::Builtin { window, .. } => window,
        };
        Window::from_bounds(w)
    }

    /// Replace the window by `[-half, half]` on every axis.
    pub fn with_half_width(&self, half: i64) -> Self {
        let mut c = self.clone();
        let dim = self.window().map(|w| w.dim()).unwrap_or(1);
        let bounds = vec![[-half, half]; dim];
        match &mut c {
            SystemConfig::Substitution { window, .. }
            | SystemConfig::Sturmian { window, .. }
            | SystemConfig::Builtin { window, .. } => *window = bounds,
        }
        c
    }

    pub fn rule(&self) -> Result<Option<SubstitutionRule>> {
        match self {
            SystemConfig::Substitution {
                alphabet,
                dimension,
                expansion,
                images,
                ..
            } => parse_rule(alphabet, dimension.unwrap_or(1), *expansion, images).map(Some),
            SystemConfig::Builtin { name, .. } => builtin_rule(name).map(Some),
            SystemConfig::Sturmian { .. } => Ok(None),
        }
    }

    pub fn build(&self) -> Result<TilingOracle> {
        let window = self.window()?;
        match self {
            SystemConfig::Sturmian { cf_terms, .. } => build_sturmian_oracle(cf_terms, &window),
            _ => {
                let rule = self.rule()?.expect("substitution-backed config");
                let o = build_substitution_oracle(&rule, &window)?;
                Ok(o)
            }
        }
    }
}

fn parse_rule(
    alphabet: &[String],
    dim: usize,
    expansion: Option<usize>,
    images: &BTreeMap<String, ImageSpec>,
) -> Result<SubstitutionRule> {
    let alpha = Alphabet::new(alphabet.iter().cloned())?;
    let lookup = |name: &str| {
        alpha
            .id(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown label `{name}` in image")))
    };
    let mut imgs: Vec<Vec<LabelId>> = Vec::with_capacity(alpha.len());
    for name in alpha.names() {
        let spec = images
            .get(name)
            .ok_or_else(|| Error::InvalidConfig(format!("no image for `{name}`")))?;
        let img = match spec {
            ImageSpec::Word(s) => s
                .chars()
                .map(|c| lookup(&c.to_string()))
                .collect::<Result<Vec<_>>>()?,
            ImageSpec::Cells(v) => v.iter().map(|n| lookup(n)).collect::<Result<Vec<_>>>()?,
        };
        imgs.push(img);
    }
    if images.len() != alpha.len() {
        return Err(Error::InvalidConfig(
            "images for labels outside the alphabet".into(),
        ));
    }
    if dim == 1 {
        if let Some(k) = expansion {
            if imgs.iter().any(|i| i.len() != k) {
                return Err(Error::InvalidConfig(format!(
                    "expansion {k} disagrees with image lengths"
                )));
            }
        }
        Ok(SubstitutionRule::Word(WordRule::new(alpha, imgs)?))
    } else {
        let k = expansion
            .ok_or_else(|| Error::InvalidConfig("block rules need an expansion".into()))?;
        Ok(SubstitutionRule::Block(BlockRule::new(
            alpha, dim, k, imgs,
        )?))
    }
}

/// Arrowed chair: each cell carries a diagonal arrow; a cell with arrow `d`
/// splits into 2x2 children where the two children on the diagonal of `d`
/// keep `d` and the other two point towards their own corner.
pub fn chair_rule() -> BlockRule {
    // (sign x, sign y) for ne, nw, sw, se
    const DIRS: [(i8, i8); 4] = [(1, 1), (-1, 1), (-1, -1), (1, -1)];
    let id_of = |q: (i8, i8)| DIRS.iter().position(|&d| d == q).unwrap() as LabelId;
    let images = DIRS
        .iter()
        .map(|&d| {
            let mut img = Vec::with_capacity(4);
            for ox in 0..2 {
                for oy in 0..2 {
                    let q = (if ox == 1 { 1 } else { -1 }, if oy == 1 { 1 } else { -1 });
                    let on_diag = q == d || q == (-d.0, -d.1);
                    img.push(if on_diag { id_of(d) } else { id_of(q) });
                }
            }
            img
        })
        .collect();
    BlockRule::new(
        Alphabet::new(["ne", "nw", "sw", "se"]).unwrap(),
        2,
        2,
        images,
    )
    .unwrap()
}

pub fn builtin_rule(name: &str) -> Result<SubstitutionRule> {
    let word = |r: &[(&str, &str)]| WordRule::from_strs(r).map(SubstitutionRule::Word);
    match name {
        "fibonacci" => word(&[("a", "ab"), ("b", "a")]),
        "thue_morse" => word(&[("a", "ab"), ("b", "ba")]),
        "period_doubling" => word(&[("a", "ab"), ("b", "aa")]),
        "chair2d" => Ok(SubstitutionRule::Block(chair_rule())),
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

pub fn builtin_system(name: &str, window: &Window) -> Result<TilingOracle> {
    let rule = builtin_rule(name)?;
    build_substitution_oracle(&rule, window)
}
