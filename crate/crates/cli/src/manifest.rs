//! Dataset manifests: image/label pairs plus the class configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use adsample_core::{ClassId, LabelMap, TargetClassSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub image: PathBuf,
    pub label: PathBuf,
}

/// JSON dataset description. Relative item paths resolve against `root`,
/// and a relative `root` resolves against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub items: Vec<ManifestItem>,
    pub classes: BTreeMap<ClassId, String>,
    pub targets: Vec<ClassId>,
    #[serde(default)]
    pub ignore: Option<ClassId>,
}

impl DatasetManifest {
    /// Loads and checks the manifest; every referenced file must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.root.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            manifest.root = base.join(&manifest.root);
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.target_set()?;
        for t in &self.targets {
            if !self.classes.contains_key(t) {
                return Err(Error::Manifest(format!("target class {t} is not in the class table")));
            }
        }
        if let Some(ig) = self.ignore {
            if self.classes.contains_key(&ig) {
                return Err(Error::Manifest(format!("ignore id {ig} is also a class")));
            }
        }
        for item in &self.items {
            for p in [self.image_path(item), self.label_path(item)] {
                if !p.is_file() {
                    return Err(Error::Manifest(format!("missing file {}", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn target_set(&self) -> Result<TargetClassSet> {
        let set = TargetClassSet::new(self.targets.iter().copied())
            .map_err(|_| Error::Manifest("no target classes".into()))?;
        if self.ignore.is_some_and(|ig| set.contains(ig)) {
            return Err(Error::Manifest("the ignore id cannot be a target".into()));
        }
        Ok(set)
    }

    /// One more than the largest class id in the table.
    pub fn num_classes(&self) -> usize {
        self.classes.keys().next_back().map_or(1, |&c| c as usize + 1)
    }

    pub fn image_path(&self, item: &ManifestItem) -> PathBuf {
        self.root.join(&item.image)
    }

    pub fn label_path(&self, item: &ManifestItem) -> PathBuf {
        self.root.join(&item.label)
    }

    /// Checks that every label is in the class table or is the ignore id.
    pub fn check_labels(&self, labels: &LabelMap) -> Result<()> {
        match labels.labels().iter().find(|&&l| !self.classes.contains_key(&l) && Some(l) != self.ignore) {
            Some(l) => Err(Error::Manifest(format!("label id {l} is not in the class table"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_relative_root_and_checks_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("data")).unwrap();
        fs::write(dir.path().join("data/a.png"), b"").unwrap();
        fs::write(dir.path().join("data/a_l.png"), b"").unwrap();
        let text = r#"{"root": "data", "items": [{"image": "a.png", "label": "a_l.png"}],
            "classes": {"0": "background", "1": "car"}, "targets": [1], "ignore": 255}"#;
        let path = dir.path().join("m.json");
        fs::write(&path, text).unwrap();
        let m = DatasetManifest::load(&path).unwrap();
        assert_eq!(m.num_classes(), 2);
        assert!(m.image_path(&m.items[0]).ends_with("data/a.png"));

        fs::remove_file(dir.path().join("data/a_l.png")).unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(Error::Manifest(_))));
    }

    #[test]
    fn rejects_bad_class_config() {
        let base = DatasetManifest {
            root: PathBuf::from("."),
            items: vec![],
            classes: BTreeMap::from([(0, "bg".to_string()), (1, "x".to_string())]),
            targets: vec![1],
            ignore: Some(255),
        };
        assert!(base.validate().is_ok());
        assert!(DatasetManifest { targets: vec![], ..base.clone() }.validate().is_err());
        assert!(DatasetManifest { targets: vec![7], ..base.clone() }.validate().is_err());
        assert!(DatasetManifest { ignore: Some(1), ..base }.validate().is_err());
    }
}
