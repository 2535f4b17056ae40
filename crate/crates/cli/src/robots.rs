//! Minimal robots.txt support: per-host Disallow prefixes for the wildcard
//! agent and for our own user agent. Fetched once per host through the same
//! transport as page requests, so offline runs consult the snapshot too.

use opiniontrend::fetch::{Clock, FetchPolicy, RateLimiter, Transport};
use std::collections::HashMap;
use url::Url;

#[derive(Debug, Default)]
struct HostRules {
    disallow: Vec<String>,
}

impl HostRules {
    fn allows(&self, path: &str) -> bool {
        !self
            .disallow
            .iter()
            .any(|prefix| !prefix.is_empty() && path.starts_with(prefix.as_str()))
    }
}

fn parse_rules(body: &str, user_agent: &str) -> HostRules {
    let agent_token = user_agent
        .split(['/', ' '])
        .next()
        .unwrap_or(user_agent)
        .to_lowercase();
    let mut rules = HostRules::default();
    let mut applies = false;
    for line in body.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let value = value.trim();
        match key.trim().to_lowercase().as_str() {
            "user-agent" => {
                applies = value == "*" || value.to_lowercase() == agent_token;
            }
            "disallow" if applies => rules.disallow.push(value.to_string()),
            _ => {}
        }
    }
    rules
}

/// Cached robots decisions, one robots.txt fetch per host.
pub struct RobotsGate {
    enabled: bool,
    cache: HashMap<String, HostRules>,
}

impl RobotsGate {
    pub fn new(enabled: bool) -> Self {
        RobotsGate {
            enabled,
            cache: HashMap::new(),
        }
    }

    pub fn allows(
        &mut self,
        url: &Url,
        policy: &FetchPolicy,
        limiter: &RateLimiter,
        transport: &dyn Transport,
        clock: &dyn Clock,
    ) -> bool {
        if !self.enabled {
            return true;
        }
        let Some(host) = url.host_str() else {
            return true;
        };
        if !self.cache.contains_key(host) {
            let rules = Url::parse(&format!(
                "{}://{}/robots.txt",
                url.scheme(),
                url.authority()
            ))
            .ok()
            .and_then(|robots_url| {
                opiniontrend::fetch::fetch_page(&robots_url, policy, limiter, transport, clock)
                    .ok()
            })
            .filter(|f| f.page.status == 200)
            .map(|f| parse_rules(&String::from_utf8_lossy(&f.page.body), &policy.user_agent))
            .unwrap_or_default();
            self.cache.insert(host.to_string(), rules);
        }
        self.cache[host].allows(url.path())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wildcard_disallow_blocks_prefix() {
        let rules = parse_rules("User-agent: *\nDisallow: /private/", "opiniontrend/0.1");
        assert!(!rules.allows("/private/page"));
        assert!(rules.allows("/public/page"));
    }

    #[test]
    fn other_agent_sections_are_ignored() {
        let rules = parse_rules(
            "User-agent: megabot\nDisallow: /\n\nUser-agent: *\nDisallow:",
            "opiniontrend/0.1",
        );
        assert!(rules.allows("/anything"));
    }

    #[test]
    fn named_agent_section_applies() {
        let rules = parse_rules(
            "User-agent: opiniontrend\nDisallow: /spip.php",
            "opiniontrend/0.1",
        );
        assert!(!rules.allows("/spip.php"));
    }
}
