use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_json, write_file, HarnessError};
use crate::label_tree::LabelTree;
use crate::scoring::ImageRef;

/// Images to classify, optionally with their true classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(default)]
    pub seed: Option<u64>,
    pub images: Vec<ImageRef>,
}

/// `per_class` images of each leaf, in a seed-dependent order.
pub fn gen_synthetic(tree: &LabelTree, per_class: usize, seed: u64) -> Result<Dataset, HarnessError> {
    if per_class == 0 {
        return Err(HarnessError::Config("per-class count must be at least 1".into()));
    }
    let labels = tree.leaf_labels();
    let mut classes: Vec<&String> = (0..per_class).flat_map(|_| labels.iter()).collect();
    classes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let images = classes
        .into_iter()
        .enumerate()
        .map(|(i, label)| ImageRef::new(format!("syn-{seed}-{i:06}"), Some(label.clone())))
        .collect();
    Ok(Dataset {
        seed: Some(seed),
        images,
    })
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_file(path, &self.to_json())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("dataset serializes");
        text.push('\n');
        text
    }

    /// SHA-256 over the image list, hex encoded. The seed does not enter.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(&self.images).expect("images serialize");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Checks every known true class against the tree's leaves.
    pub fn check_classes(&self, tree: &LabelTree) -> Result<(), HarnessError> {
        for image in &self.images {
            if let Some(class) = &image.true_class {
                if tree.leaf_by_label(class).is_none() {
                    return Err(HarnessError::Config(format!(
                        "image {:?} has class {class:?}, which is not a leaf of the tree",
                        image.image_id
                    )));
                }
            }
        }
        Ok(())
    }
}
