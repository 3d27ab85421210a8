//! Runtime parameters of the agent: decay rates, shadow dynamics constants
//! and strictness flags. All values can be overridden from a `key = value`
//! config file or `--param key=value` flags.

use thiserror::Error;

#[derive(Debug, Clone)]
pub struct Params {
    /// Focus decay rate of instances, per second.
    pub lambda_instance: f64,
    /// Focus decay rate of action VIs, per second.
    pub lambda_action_vi: f64,
    /// Focus decay rate of stative (attribute/relation/question) VIs.
    pub lambda_stative_vi: f64,
    /// Focus weight below which a component is demoted to memory.
    pub eps_evict: f64,
    /// Push-out factor applied to an action VI per acquired successor.
    pub rho: f64,
    /// Minimum pacing (seconds per sentence) that grants a respiro.
    pub tau_respiro: f64,
    /// Area of concepts created for proper nouns.
    pub pn_area: f64,
    /// Shadow attraction rate, per second.
    pub alpha: f64,
    /// Weight of the argument-consistency term in shadow attraction.
    pub beta: f64,
    /// Additive shadow bonus between fictional-identity pairs.
    pub gamma: f64,
    /// Verb similarity threshold for headless-shadow clustering.
    pub theta_hs: f64,
    /// Minimum cluster support required to instantiate an inference.
    pub theta_inst: f64,
    /// Salience weight per second spent in focus.
    pub w_time: f64,
    /// Salience weight per VI participation.
    pub w_part: f64,
    /// Memory salience decay rate, per second.
    pub salience_decay: f64,
    /// Shadow bodies are truncated to this many members.
    pub shadow_k: usize,
    /// Shadow strength above which identity may be inferred (when enabled).
    pub sigma_id: f64,
    /// Infer fictional identity from strong shadows. Off by default so corpus
    /// runs stay fixed.
    pub infer_identity: bool,
    /// Strict mode: unknown verb words, resolution ties and somatic branching
    /// become errors instead of lenient fallbacks.
    pub strict: bool,
    /// Lenient noun mode: unknown noun words get fresh concepts instead of
    /// erroring.
    pub lenient_nouns: bool,
    /// Cap on inferences instantiated per respiro.
    pub max_inferences: usize,
    /// Number of diffusion sub-steps per sentence pacing interval.
    pub da_substeps: u32,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            lambda_instance: 0.05,
            lambda_action_vi: 0.2,
            lambda_stative_vi: 0.1,
            eps_evict: 0.05,
            rho: 0.5,
            tau_respiro: 2.0,
            pn_area: 0.1,
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.4,
            theta_hs: 0.5,
            theta_inst: 0.3,
            w_time: 0.01,
            w_part: 0.2,
            salience_decay: 0.001,
            shadow_k: 16,
            sigma_id: 0.6,
            infer_identity: false,
            strict: false,
            lenient_nouns: false,
            max_inferences: 8,
            da_substeps: 10,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown parameter `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for parameter `{key}`")]
    BadValue { key: String, value: String },
    #[error("config line {line}: expected `key = value`")]
    Malformed { line: usize },
}

impl Params {
    /// Set one parameter from its textual name and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue { key: key.to_string(), value: value.to_string() };
        macro_rules! num {
            ($field:ident) => {{
                self.$field = value.parse().map_err(|_| bad())?;
            }};
        }
        match key {
            "lambda_instance" => num!(lambda_instance),
            "lambda_action_vi" => num!(lambda_action_vi),
            "lambda_stative_vi" => num!(lambda_stative_vi),
            "eps_evict" => num!(eps_evict),
            "rho" => num!(rho),
            "tau_respiro" => num!(tau_respiro),
            "pn_area" => num!(pn_area),
            "alpha" => num!(alpha),
            "beta" => num!(beta),
            "gamma" => num!(gamma),
            "theta_hs" => num!(theta_hs),
            "theta_inst" => num!(theta_inst),
            "w_time" => num!(w_time),
            "w_part" => num!(w_part),
            "salience_decay" => num!(salience_decay),
            "shadow_k" => num!(shadow_k),
            "sigma_id" => num!(sigma_id),
            "max_inferences" => num!(max_inferences),
            "da_substeps" => num!(da_substeps),
            "infer_identity" => self.infer_identity = value.parse().map_err(|_| bad())?,
            "strict" => self.strict = value.parse().map_err(|_| bad())?,
            "lenient_nouns" => self.lenient_nouns = value.parse().map_err(|_| bad())?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply a `key = value` config file, `#` comments allowed.
    pub fn load_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or(ConfigError::Malformed { line: idx + 1 })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_and_load() {
        let mut p = Params::default();
        p.set("rho", "0.25").unwrap();
        assert_eq!(p.rho, 0.25);
        p.load_str("alpha = 0.1 # faster\nstrict = true\n").unwrap();
        assert_eq!(p.alpha, 0.1);
        assert!(p.strict);
        assert_eq!(p.set("nope", "1"), Err(ConfigError::UnknownKey("nope".into())));
        assert!(p.set("alpha", "x").is_err());
        assert!(p.load_str("alpha").is_err());
    }
}
