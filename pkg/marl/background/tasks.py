import logging
from pathlib import Path

from celery import shared_task

from marl.records import SkillRecord
from marl.serializers import TrainSkillConfigSerializer, train_config_from_data
from marl.trainer import evaluate_skill, train_skill, training_world_config
from sgswarm.validation import validate_config
from swarmsim.serializers import env_from_data, world_config_from_data

logger = logging.getLogger(__name__)


@shared_task(bind=True)
def train_skill_job(self, config, out_dir, seed=0, warm_start_dir=None):
    """
    Celery job that trains one skill from a JSON training config and saves the skill
    directory under `out_dir`. With `warm_start_dir` the job fine-tunes that skill
    instead of starting from fresh weights. Progress is reported per episode when the
    job runs on a worker.
    :param self: bound task
    :param config: raw training config (validated here)
    :param out_dir: destination skill directory
    :param seed: seed for weights, noise, replay sampling and world spawns
    :param warm_start_dir: optional SkillRecord directory to start from
    :return: summary dict of the saved skill
    """
    data = validate_config(TrainSkillConfigSerializer, config)
    env = env_from_data(data['env'])
    task = data['task']
    train_config = train_config_from_data(task, data, seed=seed)
    if data.get('world') is not None:
        world_config = world_config_from_data(data['world'], seed=seed)
    else:
        world_config = training_world_config(env, task, train_config.team_size, seed)

    warm_start = SkillRecord.load(warm_start_dir) if warm_start_dir else None

    def report(episode, row):
        if not self.request.is_eager:
            self.update_state(state='PROGRESS', meta={
                'episode': episode + 1,
                'episodes': train_config.episodes,
                'mean_reward': row.mean_reward,
            })

    logger.info("Training %s (%s, %d episodes, seed %d)", data['skill_id'], task.label(), train_config.episodes,
                seed)
    record = train_skill(env, task, train_config, world_config=world_config, skill_id=data['skill_id'],
                         warm_start=warm_start, progress=report)
    path = record.save(Path(out_dir))

    summary = {
        'skill_id': record.skill_id,
        'path': str(path),
        'episodes': len(record.curve),
        'parent_id': record.parent_id,
    }
    if data['eval_episodes']:
        summary['metrics'] = evaluate_skill(record, world_config, data['eval_episodes'], seed=seed).as_dict()
    return summary
