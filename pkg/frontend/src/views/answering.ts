import { el, statusLine } from '../dom';
import type { AppContext } from '../main';
import { ANSWER_MAX_CHARS, type QuestionsPayload, type QuestionView } from '../types';

export function renderAnswering(root: HTMLElement, ctx: AppContext, payload: QuestionsPayload): void {
  const answeredCount = () => Object.keys(payload.answered).length;

  const finish = el('button', { className: 'primary', textContent: 'Finish & see summary' });
  finish.dataset.testid = 'finish-session';
  const footerMessages = el('div');

  function syncFinish(): void {
    finish.disabled = answeredCount() === 0;
  }

  finish.addEventListener('click', async () => {
    finish.disabled = true;
    try {
      await ctx.api.finalizeSummary(ctx.sessionId!);
      await ctx.navigate(`#/s/${ctx.sessionId}/summary`);
    } catch (err) {
      finish.disabled = false;
      footerMessages.append(statusLine('error', String(err)));
    }
  });

  const list = el('div', { className: 'question-list' });
  payload.questions.forEach((question, index) => {
    list.append(questionCard(ctx, payload, question, index, syncFinish));
  });

  root.append(
    el('h1', { textContent: 'Your reflection questions' }),
    el('p', {
      textContent:
        'Answer in your own words. Each answer gets a score from 0 to 3 and a short hint.',
    }),
    list,
    finish,
    footerMessages,
  );
  syncFinish();
}

function questionCard(
  ctx: AppContext,
  payload: QuestionsPayload,
  question: QuestionView,
  index: number,
  onAnswered: () => void,
): HTMLElement {
  const card = el('section', { className: 'question-card' });
  card.dataset.testid = `question-${index}`;
  card.append(el('h2', { textContent: `${index + 1}. ${question.statement}` }));

  const result = el('div', { className: 'evaluation' });
  result.dataset.testid = `evaluation-${index}`;

  const existing = payload.answered[question.id];
  if (existing) {
    showEvaluation(result, existing.score, existing.hint);
    card.append(result);
    return card;
  }

  const textarea = el('textarea', {
    rows: 4,
    maxLength: ANSWER_MAX_CHARS,
    value: payload.drafts[question.id] ?? '',
  });
  textarea.dataset.testid = `answer-${index}`;
  const counter = el('span', { className: 'counter' });
  const syncCounter = () => {
    counter.textContent = `${textarea.value.length} / ${ANSWER_MAX_CHARS}`;
  };
  textarea.addEventListener('input', syncCounter);
  syncCounter();

  const submit = el('button', { textContent: 'Submit answer' });
  submit.dataset.testid = `submit-${index}`;
  const messages = el('div');

  submit.addEventListener('click', async () => {
    if (submit.disabled) return; // one in-flight submission per question
    submit.disabled = true;
    textarea.disabled = true;
    messages.textContent = '';
    try {
      const evaluation = await ctx.api.submitAnswer(ctx.sessionId!, question.id, textarea.value);
      payload.answered[question.id] = evaluation;
      textarea.remove();
      counter.remove();
      submit.remove();
      showEvaluation(result, evaluation.score, evaluation.hint);
      onAnswered();
    } catch (err) {
      submit.disabled = false;
      textarea.disabled = false;
      messages.append(statusLine('error', String(err)));
    }
  });

  card.append(textarea, el('div', { className: 'answer-meta' }, [counter, submit]), messages, result);
  return card;
}

function showEvaluation(target: HTMLElement, score: number, hint: string): void {
  target.append(
    el('p', { className: 'score', textContent: `Score: ${score} / 3` }),
    el('p', { className: 'hint', textContent: `Hint: ${hint}` }),
  );
}
